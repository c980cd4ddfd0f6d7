"""End-to-end experiment: data, ensemble, students, evaluation tables.

Everything is driven by a :class:`PipelineConfig`; every random choice is
derived from ``config.seed``.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import decode as dc
from . import metrics as mt
from . import synthdata as sd
from . import uncertainty as unc
from .distill import train as tr
from .distill.targets import TeacherCache
from .errors import ContractError, InputError
from .nnet import ModelConfig, SeqModel, load_checkpoint, save_checkpoint
from .nnet import autodiff as ad
from .nnet.model import log_softmax, softmax, source_batch, target_batch

log = logging.getLogger(__name__)

SYSTEMS = ("ind", "ens", "dist", "nll", "kl", "gua")
TESTSETS = ("id", "ood", "mix")
RANKINGS = ("length", "tu", "du", "ku", "manual")
OUTPUT_ENV = "SEQENDD_OUTPUT_DIR"


@dataclass
class DataConfig:
    n_train: int = 20000
    n_test: int = 2000
    n_ood: int = 2000
    seed: int = 0


@dataclass
class ModelSection:
    embed_dim: int = 32
    hidden_dim: int = 64
    max_len: int = 64


@dataclass
class PipelineConfig:
    output_dir: str = field(default_factory=lambda: os.environ.get(OUTPUT_ENV, "runs/default"))
    seed: int = 0
    ensemble_size: int = 5
    eval_temperature: float = 3.0
    grid_step: float = 0.02
    ranking: str = "ku"
    use_rate: bool = False
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelSection = field(default_factory=ModelSection)
    members: tr.TrainConfig = field(default_factory=lambda: tr.TrainConfig(epochs=6))
    students: tr.TrainConfig = field(default_factory=lambda: tr.TrainConfig(epochs=6))
    decode_batch: int = 128

    def __post_init__(self):
        if self.ensemble_size < 1:
            raise ContractError("ensemble_size must be at least 1")
        if self.ranking not in RANKINGS:
            raise ContractError(f"ranking must be one of {RANKINGS}")

    # paths
    @property
    def root(self) -> Path:
        return Path(self.output_dir)

    @property
    def data_dir(self) -> Path:
        return self.root / "data"

    @property
    def ckpt_dir(self) -> Path:
        return self.root / "checkpoints"

    @property
    def eval_dir(self) -> Path:
        return self.root / "eval"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> PipelineConfig:
        raw = dict(raw or {})
        sections = {"data": DataConfig, "model": ModelSection, "members": tr.TrainConfig, "students": tr.TrainConfig}
        kwargs = {}
        names = {f.name for f in dataclasses.fields(cls)}
        for key, value in raw.items():
            if key not in names:
                raise ContractError(f"unknown config key {key!r}")
            if key in sections:
                fields = {f.name for f in dataclasses.fields(sections[key])}
                unknown = sorted(set(value or {}) - fields)
                if unknown:
                    raise ContractError(f"unknown config key {key}.{unknown[0]}")
                kwargs[key] = sections[key](**(value or {}))
            else:
                kwargs[key] = value
        return cls(**kwargs)


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Read a YAML config (nested sections) and apply dotted-key overrides."""
    raw = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise InputError("config file not found", location=str(path))
        raw = yaml.safe_load(path.read_text()) or {}
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = raw
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return PipelineConfig.from_dict(raw)


def dump_config(config: PipelineConfig, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "effective_config.yaml"
    path.write_text(yaml.safe_dump(config.to_dict(), sort_keys=True))
    return path


# ---------------------------------------------------------------------------
# data

def grammar(config: PipelineConfig) -> sd.GrammarConfig:
    return sd.GrammarConfig(seed=config.data.seed + 1000 * config.seed)


def generate_data(config: PipelineConfig) -> dict[str, list[sd.SentencePair]]:
    g = grammar(config)
    return {
        "train": sd.generate_corpus(g, config.data.n_train),
        "test_id": sd.generate_corpus(replace(g, seed=g.seed + 1), config.data.n_test),
        "test_ood": sd.generate_corpus(sd.ood_config(g), config.data.n_ood),
    }


def write_data(config: PipelineConfig, corpora) -> list[dict]:
    config.data_dir.mkdir(parents=True, exist_ok=True)
    vocab = sd.Vocabulary(grammar(config).vocab)
    rows = []
    for name, pairs in corpora.items():
        sd.write_corpus(config.data_dir / f"{name}.jsonl", pairs, vocab)
        rows.append({"set": name, **sd.corpus_stats(pairs), "domain": "OOD" if "ood" in name else "ID"})
    return rows


def read_data(config: PipelineConfig, names=("train", "test_id", "test_ood")):
    return {n: sd.read_corpus(config.data_dir / f"{n}.jsonl") for n in names}


def model_config(config: PipelineConfig, head_mode="softmax", seed=0) -> ModelConfig:
    return ModelConfig(
        vocab_size=len(grammar(config).vocab),
        embed_dim=config.model.embed_dim,
        hidden_dim=config.model.hidden_dim,
        head_mode=head_mode,
        max_len=config.model.max_len,
        seed=seed,
    )


def member_seed(config, m):
    return 100 * config.seed + m + 1


def student_seed(config, name):
    return 100 * config.seed + 50 + ("dist", "nll", "kl").index(name)


# ---------------------------------------------------------------------------
# training

def train_ensemble(config: PipelineConfig, corpus, log_dir=None) -> list[SeqModel]:
    members = []
    for m in range(config.ensemble_size):
        seed = member_seed(config, m)
        with _epoch_log(log_dir, f"member{m}") as elog:
            members.append(tr.train_member(corpus, model_config(config), config.members, seed, epoch_log=elog))
    return members


def train_students(config: PipelineConfig, ensemble, corpus, which=("dist", "nll", "kl"), log_dir=None):
    cache = TeacherCache(ensemble, corpus)
    out = {}
    for name in which:
        sc = replace(config.students, seed=student_seed(config, name))
        with _epoch_log(log_dir, name) as elog:
            if name == "dist":
                mc = model_config(config, "softmax", sc.seed)
                out[name] = tr.train_distilled(ensemble, corpus, mc, sc, cache=cache, epoch_log=elog)
            else:
                mc = model_config(config, "concentration", sc.seed)
                out[name] = tr.train_distribution_distilled(ensemble, corpus, mc, sc, objective=name,
                                                            cache=cache, epoch_log=elog)
    return out


class _epoch_log:
    def __init__(self, directory, name):
        self.path = None if directory is None else Path(directory) / f"{name}.log"

    def __enter__(self):
        self.fh = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.fh = self.path.open("w")
        return tr.EpochLog(self.fh)

    def __exit__(self, *exc):
        if self.fh:
            self.fh.close()


def save_models(models: dict[str, SeqModel], directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, m in models.items():
        save_checkpoint(m, directory / f"{name}.ckpt")


def load_models(names, directory) -> dict[str, SeqModel]:
    directory = Path(directory)
    out = {}
    for name in names:
        path = directory / f"{name}.ckpt"
        if not path.exists():
            raise InputError(f"missing checkpoint for {name}", location=str(path))
        out[name] = load_checkpoint(path)
    return out


def member_names(config):
    return [f"member{m}" for m in range(config.ensemble_size)]


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class SystemOutput:
    """Scored sentences for one system on one test set, plus token-level detail."""

    sentences: list
    token_triples: np.ndarray | None = None  # (total_tokens, 3) TU, DU, KU


def _scored(pairs, decoded, token_lists=None):
    out = []
    for i, (p, r) in enumerate(zip(pairs, decoded)):
        seq = unc.sequence_uncertainty(token_lists[i]) if token_lists is not None else None
        out.append(mt.ScoredSentence(p.source, p.reference, r.tokens, uncertainties=seq))
    return out


def _triples(token_lists):
    return np.array([[t.triple.total, t.triple.data, t.triple.knowledge] for toks in token_lists for t in toks])


def evaluate_single(model: SeqModel, pairs, batch=128) -> SystemOutput:
    """Greedy decode; Dirichlet students also report their own uncertainties."""
    decoded = dc.greedy_decode_batch(model, [p.source for p in pairs], batch_size=batch)
    if model.config.head_mode == "concentration":
        tokens = [unc.dirichlet_token_uncertainties(r.outputs) for r in decoded]
        return SystemOutput(_scored(pairs, decoded, tokens), _triples(tokens))
    return SystemOutput(_scored(pairs, decoded))


def evaluate_ensemble(ensemble, pairs, temperature=3.0, batch=128) -> SystemOutput:
    decoded = dc.ensemble_greedy_decode_batch(ensemble, [p.source for p in pairs], temperature, batch_size=batch)
    tokens = [unc.ensemble_token_uncertainties(r.member_outputs) for r in decoded]
    return SystemOutput(_scored(pairs, decoded, tokens), _triples(tokens))


def evaluate_gua(predictor, uq_model, pairs, batch=128) -> SystemOutput:
    results = dc.gua_decode_batch(predictor, uq_model, [p.source for p in pairs], batch_size=batch)
    decoded = [r for r, _ in results]
    tokens = [unc.dirichlet_token_uncertainties(alphas) for _, alphas in results]
    return SystemOutput(_scored(pairs, decoded, tokens), _triples(tokens))


def ranking_scores(sentences, metric: str, use_rate=False) -> np.ndarray:
    if metric == "length":
        return np.array([s.length for s in sentences], dtype=np.float64)
    if metric == "manual":
        return np.array([mt.manual_score(s) for s in sentences])
    return np.array([s.uncertainties.metric(metric, use_rate) for s in sentences])


def rejection_summary(sentences, grid_step=0.02, use_rate=False, metrics=("length", "tu", "du", "ku")) -> dict:
    """AUC_RR and 10%-rejection GLEU per ranking metric (manual included)."""
    manual = mt.rejection_curve(sentences, ranking_scores(sentences, "manual"), grid_step)
    random_auc = mt.random_rejection_auc(sentences, grid_step)
    out = {"base": mt.gleu_corpus(sentences), "auc_rr": {}, "reject10": {}, "curves": {"manual": manual}}
    for metric in tuple(metrics) + ("manual",):
        scores = ranking_scores(sentences, metric, use_rate)
        curve = manual if metric == "manual" else mt.rejection_curve(sentences, scores, grid_step)
        out["curves"][metric] = curve
        out["auc_rr"][metric] = mt.auc_rr(curve, manual, random_auc)
        out["reject10"][metric] = mt.rejection_at(sentences, scores, 0.10)
    return out


def teacher_forced_tu(ensemble, uq_model, pairs, temperature=3.0, batch=128):
    """Token TU from the ensemble (tempered) and a Dirichlet student under teacher forcing."""
    ens_tu, stu_tu = [], []
    for start in range(0, len(pairs), batch):
        chunk = pairs[start : start + batch]
        src_ids, src_mask = source_batch([p.source for p in chunk])
        tgt_in, _, mask = target_batch([p.reference for p in chunk])
        with ad.no_grad():
            member = [softmax(log_softmax(m.teacher_forced_logits(src_ids, src_mask, tgt_in).value) / temperature)
                      for m in ensemble]
            alphas = uq_model.head(uq_model.teacher_forced_logits(src_ids, src_mask, tgt_in).value)
        mean = np.mean(member, axis=0)[mask]
        ens_tu.append(-(mean * np.log(np.maximum(mean, 1e-300))).sum(-1))
        stu_mean = (alphas / alphas.sum(-1, keepdims=True))[mask]
        stu_tu.append(-(stu_mean * np.log(np.maximum(stu_mean, 1e-300))).sum(-1))
    return np.concatenate(ens_tu), np.concatenate(stu_tu)


def annotation_records(sentences, vocab: sd.Vocabulary):
    for i, s in enumerate(sentences):
        rec = {
            "id": i,
            "src": vocab.decode(s.source),
            "ref": vocab.decode(s.reference),
            "hyp": vocab.decode(s.hypothesis),
            "gleu": s.gleu,
        }
        u = s.uncertainties.as_dict() if s.uncertainties is not None else dict.fromkeys(
            ("tu_sum", "du_sum", "ku_sum", "tu_rate", "du_rate", "ku_rate"))
        u["length"] = s.length
        rec.update(u)
        yield rec


def write_annotations(path, sentences, vocab):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in annotation_records(sentences, vocab):
            fh.write(json.dumps(rec) + "\n")


def read_annotations(path, vocab: sd.Vocabulary | None = None):
    """Rebuild scored sentences (with uncertainties when present) from an annotations file."""
    path = Path(path)
    if not path.exists():
        raise InputError("annotations file not found", location=str(path))
    vocab = vocab or sd.Vocabulary.load(path.with_suffix(".vocab"))
    out = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                seq = None
                if rec.get("tu_sum") is not None:
                    seq = unc.SequenceUncertainty(rec["tu_sum"], rec["du_sum"], rec["ku_sum"], rec["length"])
                out.append(mt.ScoredSentence(vocab.encode(rec["src"]), vocab.encode(rec["ref"]),
                                             vocab.encode(rec["hyp"]), gleu=rec["gleu"], uncertainties=seq))
            except (KeyError, TypeError, ValueError) as exc:
                raise InputError(f"malformed annotation ({exc})", location=f"{path}:{lineno}") from None
    return out


# ---------------------------------------------------------------------------
# full evaluation and result tables

@dataclass
class Evaluation:
    """All evaluated outputs keyed by (system, testset); ``members`` keyed by testset."""

    outputs: dict = field(default_factory=dict)
    members: dict = field(default_factory=dict)
    grid_step: float = 0.02
    use_rate: bool = False
    _rejections: dict = field(default_factory=dict, repr=False)

    def sentences(self, system, testset):
        if testset == "mix":
            return self.outputs[system, "id"].sentences + self.outputs[system, "ood"].sentences
        return self.outputs[system, testset].sentences

    def gleu(self, system, testset) -> float:
        return mt.gleu_corpus(self.sentences(system, testset))

    def member_gleu(self, testset) -> np.ndarray:
        if testset == "mix":
            return np.array([mt.gleu_corpus(a.sentences + b.sentences)
                             for a, b in zip(self.members["id"], self.members["ood"])])
        return np.array([mt.gleu_corpus(o.sentences) for o in self.members[testset]])

    def rejection(self, system, testset) -> dict:
        key = (system, testset)
        if key not in self._rejections:
            self._rejections[key] = rejection_summary(self.sentences(system, testset), self.grid_step, self.use_rate)
        return self._rejections[key]


def evaluate_systems(config: PipelineConfig, ensemble, students: dict, corpora,
                     systems=SYSTEMS, testsets=("id", "ood")) -> Evaluation:
    """Decode and score every requested system on the ID and/or OOD test sets."""
    ev = Evaluation(grid_step=config.grid_step, use_rate=config.use_rate)
    sets = {"id": corpora.get("test_id"), "ood": corpora.get("test_ood")}
    wanted = sorted({t for ts in testsets for t in (("id", "ood") if ts == "mix" else (ts,))}, key=TESTSETS.index)
    batch = config.decode_batch
    for ts in wanted:
        pairs = sets[ts]
        if "ind" in systems:
            ev.members[ts] = [evaluate_single(m, pairs, batch) for m in ensemble]
        if "ens" in systems:
            ev.outputs["ens", ts] = evaluate_ensemble(ensemble, pairs, config.eval_temperature, batch)
        for name in ("dist", "nll", "kl"):
            if name in systems:
                ev.outputs[name, ts] = evaluate_single(students[name], pairs, batch)
        if "gua" in systems:
            ev.outputs["gua", ts] = evaluate_gua(students["dist"], students["kl"], pairs, batch)
    return ev


def required_models(systems) -> tuple[bool, list[str]]:
    """Whether the ensemble is needed and which students must be loaded."""
    need_ens = bool({"ind", "ens"} & set(systems))
    students = set()
    for s in systems:
        if s in ("dist", "nll", "kl"):
            students.add(s)
        elif s == "gua":
            students |= {"dist", "kl"}
    return need_ens, sorted(students)


@dataclass
class Table:
    title: str
    header: list
    rows: list

    def text(self) -> str:
        cells = [self.header] + [[_cell(v) for v in r] for r in self.rows]
        widths = [max(len(str(r[i])) for r in cells) for i in range(len(self.header))]
        lines = [self.title]
        for j, r in enumerate(cells):
            lines.append("  ".join(str(v).rjust(w) if i else str(v).ljust(w) for i, (v, w) in enumerate(zip(r, widths))))
            if j == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def csv(self) -> str:
        out = [",".join(self.header)]
        out += [",".join(_cell(v, csv=True) for v in r) for r in self.rows]
        return "\n".join(out) + "\n"

    def write(self, directory, stem):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / f"{stem}.txt").write_text(self.text())
        (directory / f"{stem}.csv").write_text(self.csv())


def _cell(v, csv=False):
    if isinstance(v, float):
        return f"{v:.6f}" if csv else f"{v:.3f}"
    return str(v)


def gleu_table(ev: Evaluation, systems=SYSTEMS, testsets=TESTSETS) -> Table:
    """GLEU points (x100) per system; the member row is mean and standard deviation."""
    testsets = [t for t in testsets if _available(ev, t)]
    rows = []
    for system in systems:
        row = [system]
        for ts in testsets:
            if system == "ind":
                if ts not in ev.members and ts != "mix":
                    row.append("-")
                    continue
                g = 100 * ev.member_gleu(ts)
                row.append(f"{g.mean():.2f}+-{g.std():.2f}")
            elif (system, "id" if ts == "mix" else ts) in ev.outputs:
                row.append(f"{100 * ev.gleu(system, ts):.2f}")
            else:
                row.append("-")
        rows.append(row)
    return Table("GLEU (points)", ["system"] + list(testsets), rows)


def _available(ev, ts):
    keys = {k[1] for k in ev.outputs} | set(ev.members)
    return {"id", "ood"} <= keys if ts == "mix" else ts in keys


def uncertainty_table(ev: Evaluation, systems=("ens", "gua"), testsets=("id", "ood")) -> Table:
    """Mean sentence-level TU/DU/KU sums and per-token rates."""
    rows = []
    for ts in testsets:
        for system in systems:
            if (system, ts) not in ev.outputs or ev.outputs[system, ts].token_triples is None:
                continue
            seqs = [s.uncertainties for s in ev.sentences(system, ts)]
            rows.append([ts, system]
                        + [float(np.mean([getattr(q, f"{k}_sum") for q in seqs])) for k in ("total", "data", "knowledge")]
                        + [float(np.mean([getattr(q, f"{k}_rate") for q in seqs])) for k in ("total", "data", "knowledge")])
    return Table("Uncertainties (nats; sentence sums and per-token rates)",
                 ["testset", "system", "tu_sum", "du_sum", "ku_sum", "tu_rate", "du_rate", "ku_rate"], rows)


def _has_uncertainty(ev, system, ts):
    parts = ("id", "ood") if ts == "mix" else (ts,)
    return all((system, p) in ev.outputs and ev.outputs[system, p].token_triples is not None for p in parts)


def auc_rr_table(ev: Evaluation, systems=("ens", "gua"), testsets=TESTSETS) -> Table:
    rows = []
    for ts in testsets:
        for system in systems:
            if _has_uncertainty(ev, system, ts):
                r = ev.rejection(system, ts)["auc_rr"]
                rows.append([ts, system] + [float(r[k]) for k in ("length", "tu", "du", "ku")])
    return Table("AUC_RR by ranking", ["testset", "system", "length", "tu", "du", "ku"], rows)


def reject_table(ev: Evaluation, systems=("ens", "gua"), testsets=TESTSETS) -> Table:
    """GLEU points after rejecting 10% of sentences under each ranking."""
    rows = []
    for ts in testsets:
        for system in systems:
            if _has_uncertainty(ev, system, ts):
                r = ev.rejection(system, ts)
                rows.append([ts, system, 100 * r["base"]]
                            + [100 * float(r["reject10"][k]) for k in ("length", "tu", "du", "ku", "manual")])
    return Table("GLEU (points) at 10% rejection",
                 ["testset", "system", "none", "length", "tu", "du", "ku", "manual"], rows)


def corpus_table(rows) -> Table:
    return Table("Corpora", ["set", "sentences", "mean_length", "corrupted_fraction", "domain"],
                 [[r["set"], r["sentences"], r["mean_length"], r["corrupted_fraction"], r["domain"]] for r in rows])


def write_evaluation(ev: Evaluation, directory, vocab: sd.Vocabulary, systems=SYSTEMS, testsets=TESTSETS):
    """Annotations per system/testset plus the four result tables (text and CSV)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for (system, ts), out in sorted(ev.outputs.items()):
        if system in systems:
            write_annotations(directory / f"{system}_{ts}.jsonl", out.sentences, vocab)
            vocab.save(directory / f"{system}_{ts}.vocab")
    if "mix" in testsets:
        for system in {s for s, _ in ev.outputs} & set(systems):
            if (system, "id") in ev.outputs and (system, "ood") in ev.outputs:
                write_annotations(directory / f"{system}_mix.jsonl", ev.sentences(system, "mix"), vocab)
                vocab.save(directory / f"{system}_mix.vocab")
    for ts, outs in ev.members.items():
        for m, out in enumerate(outs):
            write_annotations(directory / f"ind{m}_{ts}.jsonl", out.sentences, vocab)
            vocab.save(directory / f"ind{m}_{ts}.vocab")
    tables = {
        "gleu": gleu_table(ev, systems, testsets),
        "uncertainty": uncertainty_table(ev, testsets=[t for t in testsets if t != "mix"]),
        "auc_rr": auc_rr_table(ev, testsets=testsets),
        "reject10": reject_table(ev, testsets=testsets),
    }
    for stem, table in tables.items():
        table.write(directory, stem)
    return tables


# ---------------------------------------------------------------------------
# rejection-curve export

def write_curve(path, curve: mt.RejectionCurve, auc_rr_value: float, plot=False, extra_curves=None) -> Path:
    """CSV with header ``fraction,score`` and a ``# AUC=... AUC_RR=...`` footer."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["fraction,score"] + [f"{f:.6f},{s:.10f}" for f, s in zip(curve.fractions, curve.scores)]
    lines.append(f"# AUC={curve.auc:.10f} AUC_RR={auc_rr_value:.10f}")
    path.write_text("\n".join(lines) + "\n")
    if plot:
        curves = {"curve": curve, **(extra_curves or {})}
        path.with_suffix(".svg").write_text(curves_svg(curves))
    return path


def read_curve(path):
    """Parse a curve CSV back into (fractions, scores, auc, auc_rr)."""
    fractions, scores, auc, rr = [], [], None, None
    for line in Path(path).read_text().splitlines()[1:]:
        if line.startswith("#"):
            fields = dict(kv.split("=") for kv in line[1:].split())
            auc, rr = float(fields["AUC"]), float(fields["AUC_RR"])
        elif line:
            f, s = line.split(",")
            fractions.append(float(f))
            scores.append(float(s))
    return np.array(fractions), np.array(scores), auc, rr


def curves_svg(curves: dict, width=480, height=320, pad=40) -> str:
    """A small standalone SVG line plot of rejection curves."""
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"]
    lo = min(float(c.scores.min()) for c in curves.values())
    hi = max(float(c.scores.max()) for c in curves.values())
    span = hi - lo or 1.0

    def xy(f, s):
        return pad + f * (width - 2 * pad), height - pad - (s - lo) / span * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" fill="none" stroke="black"/>',
             f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" font-size="12">fraction rejected</text>',
             f'<text x="{pad}" y="{pad - 8}" font-size="11">{hi:.3f}</text>',
             f'<text x="{pad}" y="{height - pad + 14}" font-size="11">{lo:.3f}</text>']
    for i, (name, c) in enumerate(curves.items()):
        colour = colours[i % len(colours)]
        pts = " ".join(f"{x:.1f},{y:.1f}" for x, y in (xy(f, s) for f, s in zip(c.fractions, c.scores)))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width - pad - 4}" y="{pad + 16 + 14 * i}" text-anchor="end" font-size="11" '
                     f'fill="{colour}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# one in-memory repetition

@dataclass
class RunResult:
    corpora: dict
    ensemble: list
    students: dict
    evaluation: Evaluation
    seconds: float


def run_experiment(config: PipelineConfig, log_dir=None) -> RunResult:
    """Generate data, train members and students, evaluate every system."""
    start = time.perf_counter()
    corpora = generate_data(config)
    ensemble = train_ensemble(config, corpora["train"], log_dir)
    students = train_students(config, ensemble, corpora["train"], log_dir=log_dir)
    ev = evaluate_systems(config, ensemble, students, corpora)
    return RunResult(corpora, ensemble, students, ev, time.perf_counter() - start)
