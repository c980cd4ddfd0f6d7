import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from oracles import central_difference, relative_error
from seqendd import dirmath as dm
from seqendd.decode import greedy_decode
from seqendd.distill import losses
from seqendd.distill.targets import TeacherCache, collect_targets, fit_token_dirichlets
from seqendd.distill.train import (TrainConfig, anneal_temperature, train_distilled,
                                   train_distribution_distilled, train_member)
from seqendd.errors import ContractError, TrainingDiverged
from seqendd.nnet import autodiff as ad
from seqendd.nnet import model as nm
from seqendd.synthdata import SentencePair

K = 8


def probs_strategy(k=K):
    return st.lists(st.floats(0.01, 10.0), min_size=k, max_size=k).map(lambda w: np.array(w) / sum(w))


# ---------------------------------------------------------------------------
# loss ops against finite differences

def _random_logits(rng, b=2, l=5):
    return rng.normal(scale=1.5, size=(b, l, K))


MASK = np.array([[True] * 5, [True, True, True, False, False]])


@pytest.mark.parametrize("objective", ["ce", "kd", "nll", "kl"])
def test_loss_op_gradients(objective):
    rng = np.random.default_rng(7)
    z = _random_logits(rng)
    if objective == "ce":
        target = rng.integers(K, size=(2, 5))
        op = losses.cross_entropy_op
    elif objective == "kd":
        target = rng.dirichlet(np.ones(K), size=(2, 5))
        op = losses.kd_loss_op
    elif objective == "nll":
        target = np.log(rng.dirichlet(np.ones(K), size=(2, 5, 4))).mean(axis=2)
        op = losses.dirichlet_nll_op
    else:
        target = rng.uniform(0.3, 6.0, size=(2, 5, K))
        op = losses.dirichlet_kl_op
    logits = ad.parameter(z)
    grad = ad.backward(op(logits, target, MASK), {"z": logits})["z"]
    with ad.no_grad():
        numeric = central_difference(lambda: float(op(ad.as_tensor(z), target, MASK).value), [z])[0]
    assert relative_error(grad.reshape(-1).tolist(), numeric) < 1e-6
    assert np.all(grad[1, 3:] == 0.0)


def test_ops_agree_with_reference_forms():
    rng = np.random.default_rng(8)
    z = _random_logits(rng, b=1, l=4)
    mask = np.ones((1, 4), bool)
    members = rng.dirichlet(np.ones(K), size=(4, 3))  # (L, M, K)
    with ad.no_grad():
        kd = float(losses.kd_loss_op(ad.as_tensor(z), members.mean(1)[None], mask).value)
        nll = float(losses.dirichlet_nll_op(ad.as_tensor(z), np.log(members).mean(1)[None], mask).value)
        fitted = rng.uniform(0.5, 4.0, size=(1, 4, K))
        kl = float(losses.dirichlet_kl_op(ad.as_tensor(z), fitted, mask).value)
    alphas = list(np.exp(z[0]))
    assert kd == pytest.approx(losses.kd_loss(list(members), list(nm.softmax(z[0]))), rel=1e-10)
    assert nll == pytest.approx(losses.endd_nll_loss(list(members), alphas), rel=1e-10)
    assert kl == pytest.approx(losses.endd_kl_loss(list(fitted[0]), alphas), rel=1e-10)


def test_masked_positions_do_not_matter():
    rng = np.random.default_rng(9)
    z = _random_logits(rng)
    target = rng.uniform(0.3, 6.0, size=(2, 5, K))
    z2 = z.copy()
    z2[1, 3:] = 1e3
    with ad.no_grad():
        a = losses.dirichlet_kl_op(ad.as_tensor(z), target, MASK).value
        b = losses.dirichlet_kl_op(ad.as_tensor(z2), target, MASK).value
    assert a == b


def test_empty_mask_is_rejected():
    with pytest.raises(ContractError):
        losses.cross_entropy_op(ad.as_tensor(np.zeros((1, 2, K))), np.zeros((1, 2), int), np.zeros((1, 2), bool))


# ---------------------------------------------------------------------------
# reference forms

def test_kd_loss_example():
    # 0.5 ln(0.5/0.25) + 0.5 ln(0.5/0.75)
    expected = 0.5 * math.log(2.0) + 0.5 * math.log(2.0 / 3.0)
    value = losses.kd_loss([np.array([[0.5, 0.5], [0.5, 0.5]])], [np.array([0.25, 0.75])])
    assert value == pytest.approx(expected, rel=1e-12)
    assert value == pytest.approx(0.14384103622589042, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(probs_strategy(), min_size=2, max_size=4), probs_strategy())
def test_kd_loss_properties(members, student):
    targets = [np.array(members)] * 2
    assert losses.kd_loss(targets, [student, student]) >= -1e-10
    assert abs(losses.kd_loss(targets, [np.mean(members, axis=0)] * 2)) <= 1e-9


def test_kd_loss_is_cross_entropy_minus_entropy():
    rng = np.random.default_rng(10)
    members = rng.dirichlet(np.ones(K), size=(3, 4))
    student = rng.dirichlet(np.ones(K), size=3)
    mean = members.mean(axis=1)
    direct = np.mean([-(m * np.log(s)).sum() + (m * np.log(m)).sum() for m, s in zip(mean, student)])
    assert losses.kd_loss(list(members), list(student)) == pytest.approx(direct, rel=1e-12)


def test_endd_kl_examples():
    assert losses.endd_kl_loss([np.array([2.0, 2.0])], [np.array([1.0, 1.0])]) == pytest.approx(
        0.125092802561388, rel=1e-10)
    alphas = [np.array([0.7, 3.0, 1.2]), np.array([5.0, 5.0, 0.1])]
    assert abs(losses.endd_kl_loss(alphas, alphas)) <= 1e-9


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.05, 50.0), min_size=3, max_size=3),
       st.lists(st.floats(0.05, 50.0), min_size=3, max_size=3))
def test_endd_kl_is_nonnegative(a, b):
    assert losses.endd_kl_loss([np.array(a)], [np.array(b)]) >= -1e-10


def test_uniform_dirichlet_nll_is_minus_log_gamma_k():
    rng = np.random.default_rng(11)
    targets = list(rng.dirichlet(np.ones(K), size=(3, 5)))
    value = losses.endd_nll_loss(targets, [np.ones(K)] * 3)
    assert value == pytest.approx(-math.lgamma(K), rel=1e-12)


def test_nll_approaches_differential_entropy():
    alpha = np.array([2.0, 5.0, 1.5])
    rng = np.random.default_rng(12)
    samples = rng.dirichlet(alpha, size=200_000)
    value = losses.endd_nll_loss([samples], [alpha])
    assert value == pytest.approx(stats.dirichlet(alpha).entropy(), abs=5e-3)


def test_nll_decreases_toward_the_fit():
    rng = np.random.default_rng(13)
    targets = [rng.dirichlet([3.0, 1.0, 2.0], size=50)]
    fit = fit_token_dirichlets(np.swapaxes(np.array(targets), 0, 1).reshape(1, 50, 3)).alpha[0]
    start = np.array([0.4, 7.0, 0.9])
    values = [losses.endd_nll_loss(targets, [start + t * (fit - start)]) for t in np.linspace(0, 1, 6)]
    assert np.all(np.diff(values) < 0)


def test_length_mismatch_raises():
    with pytest.raises(ContractError):
        losses.kd_loss([np.ones((2, 2)) / 2], [])
    with pytest.raises(ContractError):
        losses.endd_nll_loss([np.ones((2, 2)) / 2] * 2, [np.ones(2)])
    with pytest.raises(ContractError):
        losses.endd_kl_loss([np.ones(2)], [np.ones(2)] * 3)
    with pytest.raises(ContractError):
        losses.kd_loss([np.ones((2, 2)) / 2], [np.ones(3) / 3])


# ---------------------------------------------------------------------------
# annealing

def test_anneal_schedule():
    config = TrainConfig(epochs=10)
    assert anneal_temperature(0, config) == 10.0
    assert anneal_temperature(5, config) == 3.0
    assert anneal_temperature(9, config) == 3.0
    assert anneal_temperature(2.5, config) == pytest.approx(6.5)
    temps = [anneal_temperature(e, config) for e in range(10)]
    assert all(a >= b for a, b in zip(temps, temps[1:]))
    with pytest.raises(ContractError):
        anneal_temperature(-1, config)


def test_train_config_contract():
    with pytest.raises(ContractError):
        TrainConfig(temperature_start=2.0, temperature_end=3.0)
    with pytest.raises(ContractError):
        TrainConfig(temperature_end=0.5, temperature_start=0.8)
    with pytest.raises(ContractError):
        TrainConfig(anneal_fraction=0.0)


# ---------------------------------------------------------------------------
# targets

def _members(m=3, vocab=K, head="softmax"):
    return [nm.init_model(nm.ModelConfig(vocab_size=vocab, embed_dim=4, hidden_dim=6, head_mode=head,
                                         max_len=16, seed=s)) for s in range(m)]


def test_collect_targets_at_unit_temperature_is_raw():
    member = _members(1)[0]
    src, ref = [4, 5, 6], [6, 7]
    assert np.array_equal(collect_targets([member], src, ref, 1.0)[:, 0], nm.forward_teacher_forced(member, src, ref))


def test_collect_targets_flatten_at_high_temperature():
    members = _members()
    src, ref = [4, 5, 6, 7], [6, 7, 5]
    raw = collect_targets(members, src, ref, 1.0)
    hot = collect_targets(members, src, ref, 10.0)
    assert hot.shape == (4, 3, K)
    assert np.allclose(hot.sum(-1), 1.0)
    assert np.all(hot.max(-1) <= raw.max(-1) + 1e-15)
    assert np.all(hot.min(-1) >= raw.min(-1) - 1e-15)
    assert np.array_equal(hot.argmax(-1), raw.argmax(-1))


def test_collect_targets_rejects_mixed_members():
    with pytest.raises(ContractError):
        collect_targets(_members(1) + _members(1, vocab=9), [4], [5], 1.0)
    with pytest.raises(ContractError):
        collect_targets(_members(1, head="concentration"), [4], [5], 1.0)


def test_fit_round_trip_from_samples():
    rng = np.random.default_rng(14)
    targets = rng.dirichlet([3.0, 7.0], size=10_000)[None]  # (L=1, M, K)
    fit = fit_token_dirichlets(targets)
    assert fit.converged.all()
    assert np.allclose(fit.alpha[0], [3.0, 7.0], rtol=0.05)


def test_identical_targets_are_flagged_at_the_ceiling():
    target = np.array([0.2, 0.3, 0.5])
    fit = fit_token_dirichlets(np.tile(target, (1, 6, 1)))
    assert not fit.converged[0]
    assert np.allclose(fit.alpha[0] / fit.alpha[0].sum(), target, rtol=1e-6)
    # the ceiling bounds the largest component, keeping the mean fixed
    assert fit.alpha[0].max() == pytest.approx(dm.ALPHA_MAX, rel=1e-9)


def test_fit_needs_two_members():
    with pytest.raises(ContractError):
        fit_token_dirichlets(np.full((2, 1, 3), 1 / 3))


def test_teacher_cache_matches_collect_targets():
    members = _members()
    corpus = [SentencePair((4, 5, 6), (6, 7)), SentencePair((5,), (4, 4, 5, 6)), SentencePair((7, 6), (5,))]
    cache = TeacherCache(members, corpus)
    for temperature in (1.0, 3.0, 10.0):
        batch = cache.tempered([2, 0, 1], temperature)
        for row, i in enumerate([2, 0, 1]):
            exact = collect_targets(members, corpus[i].source, corpus[i].reference, temperature)
            # the cache keeps float32 log-probabilities
            assert np.allclose(batch[row, : len(exact)], exact, atol=1e-6)
        fits = cache.fitted([1], temperature)[0]
        direct = fit_token_dirichlets(collect_targets(members, corpus[1].source, corpus[1].reference, temperature))
        assert np.allclose(fits, direct.alpha, rtol=1e-3)


# ---------------------------------------------------------------------------
# training

CORPUS = [SentencePair((4, 5, 6), (4, 5, 7)), SentencePair((6, 6), (6, 5)), SentencePair((7, 4, 4, 5), (7, 4, 5)),
          SentencePair((5, 7), (5, 7, 6)), SentencePair((4,), (4, 6))] * 4


def _model_config(head="softmax"):
    return nm.ModelConfig(vocab_size=K, embed_dim=8, hidden_dim=16, head_mode=head, max_len=16)


def test_member_memorizes_a_single_sentence():
    pair = SentencePair((4, 5, 6, 7), (4, 6, 6, 7, 5))
    model = train_member([pair], _model_config(), TrainConfig(epochs=150, batch_size=1, learning_rate=1e-2), seed=1)
    assert greedy_decode(model, pair.source).tokens == pair.reference


def test_member_training_reduces_loss_and_is_seeded():
    from seqendd.distill.train import EpochLog

    logs = [EpochLog(), EpochLog()]
    config = TrainConfig(epochs=6, batch_size=4, learning_rate=1e-2)
    a = train_member(CORPUS, _model_config(), config, seed=3, epoch_log=logs[0])
    b = train_member(CORPUS, _model_config(), config, seed=3, epoch_log=logs[1])
    c = train_member(CORPUS, _model_config(), config, seed=4)
    assert logs[0].rows[-1][2] < logs[0].rows[0][2]
    assert all(r[1] == 1.0 for r in logs[0].rows)
    assert all(np.array_equal(a.state()[k], v) for k, v in b.state().items())
    assert any(not np.array_equal(a.state()[k], v) for k, v in c.state().items())
    with pytest.raises(ContractError):
        train_member(CORPUS, _model_config("concentration"), config, seed=1)
    with pytest.raises(ContractError):
        train_member([], _model_config(), config, seed=1)


@pytest.fixture(scope="module")
def small_ensemble():
    config = TrainConfig(epochs=4, batch_size=4, learning_rate=1e-2)
    return [train_member(CORPUS, _model_config(), config, seed=s) for s in range(3)]


@pytest.mark.parametrize("kind", ["dist", "nll", "kl"])
def test_students_train_deterministically(small_ensemble, kind):
    from seqendd.distill.train import EpochLog

    config = TrainConfig(epochs=4, batch_size=4, learning_rate=1e-2, seed=5)

    def run(log):
        if kind == "dist":
            return train_distilled(small_ensemble, CORPUS, _model_config(), config, epoch_log=log)
        return train_distribution_distilled(small_ensemble, CORPUS, _model_config("concentration"), config,
                                            objective=kind, epoch_log=log)

    log = EpochLog()
    a, b = run(log), run(None)
    assert all(np.array_equal(a.state()[k], v) for k, v in b.state().items())
    assert [r[1] for r in log.rows] == [10.0, 6.5, 3.0, 3.0]
    assert all(np.isfinite(r[2]) for r in log.rows)


def test_student_head_contracts(small_ensemble):
    config = TrainConfig(epochs=1)
    with pytest.raises(ContractError):
        train_distilled(small_ensemble, CORPUS, _model_config("concentration"), config)
    with pytest.raises(ContractError):
        train_distribution_distilled(small_ensemble, CORPUS, _model_config(), config)
    with pytest.raises(ContractError):
        train_distribution_distilled(small_ensemble, CORPUS, _model_config("concentration"), config, objective="mse")


def test_divergence_reports_last_good_model(monkeypatch):
    real = losses.cross_entropy_op
    calls = []

    def poisoned(logits, target, mask):
        calls.append(1)
        loss = real(logits, target, mask)
        return ad.mul(loss, ad.as_tensor(np.nan)) if len(calls) == 8 else loss

    monkeypatch.setattr(losses, "cross_entropy_op", poisoned)
    config = TrainConfig(epochs=3, batch_size=4, learning_rate=1e-2)
    with pytest.raises(TrainingDiverged) as info:
        train_member(CORPUS, _model_config(), config, seed=1)
    # 5 batches per epoch, so the failure hits epoch 1 and the snapshot is from epoch 0
    assert "epoch 1" in str(info.value)
    assert info.value.last_good is not None
    assert all(np.all(np.isfinite(v)) for v in info.value.last_good.state().values())
