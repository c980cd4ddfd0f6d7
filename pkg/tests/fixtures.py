"""Small hand-built GEC fixtures: (source, reference, hypothesis) token triples."""


def s(text):
    return tuple(text.split())


# mostly correct hypotheses, two with a single residual error
FIVE = [
    (s("the cat sit quietly on the old mat near the warm window today"),
     s("the cat sits quietly on the old mat near the warm window today"),
     s("the cat sits quietly on the old mat near the warm window today")),
    (s("a dogs run fast in the big green park with the happy children"),
     s("a dog runs fast in the big green park with the happy children"),
     s("a dog run fast in the big green park with the happy children")),
    (s("he go to the small school on monday and friday with his sister"),
     s("he goes to the small school on monday and friday with his sister"),
     s("he goes to the small school on monday and friday with his sister")),
    (s("these birds sings very quick in the tall trees behind the house"),
     s("these birds sing very quickly in the tall trees behind the house"),
     s("these birds sing very quickly in the tall trees behind the house")),
    (s("we has two cars and one bike in the garage next to the garden"),
     s("we have two cars and one bike in the garage next to the garden"),
     s("we has two cars and one bike in the garage next to the garden")),
]

# short, low-quality set on which the manual ranking is beaten at some grid points
ROUGH = [
    (s("the cat sit on mat"), s("the cat sits on the mat"), s("the cat sit on the mat")),
    (s("a dogs run"), s("a dog runs"), s("a dog runs")),
    (s("he go to school at monday"), s("he goes to school on monday"), s("he go to school on monday")),
    (s("birds sings quick"), s("birds sing quickly"), s("birds sings quick")),
    (s("i has two car and one bikes"), s("i have two cars and one bike"), s("i have two car and one bike")),
]
