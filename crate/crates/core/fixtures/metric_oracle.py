"""Reference scores for metric_pairs.json. Run: python3 metric_oracle.py > metric_pairs.json"""
import json
import math
import re
from collections import Counter
from fractions import Fraction

PUNCT = re.compile(r"[.,!?;:'\"()\[\]]")
ARTICLES = {"a", "an", "the"}


def toks(s):
    return PUNCT.sub("", s.lower()).split()


def norm(s):
    return " ".join(t for t in toks(s) if t not in ARTICLES)


def em(p, golds):
    return 1.0 if any(norm(p) == norm(g) for g in golds) else 0.0


def f1_one(p, g):
    p, g = toks(p), toks(g)
    if not p and not g:
        return Fraction(1)
    if not p or not g:
        return Fraction(0)
    common = sum((Counter(p) & Counter(g)).values())
    if common == 0:
        return Fraction(0)
    prec, rec = Fraction(common, len(p)), Fraction(common, len(g))
    return 2 * prec * rec / (prec + rec)


def bleu(p, g, k=4):
    p, g = toks(p), toks(g)
    if not p:
        return 0.0
    orders = min(k, len(p))
    logs = []
    for n in range(1, orders + 1):
        pc = Counter(tuple(p[i:i + n]) for i in range(len(p) - n + 1))
        gc = Counter(tuple(g[i:i + n]) for i in range(len(g) - n + 1))
        clip = sum((pc & gc).values())
        prec = clip / sum(pc.values()) if clip else 1 / (2 * len(p))
        logs.append(math.log(prec))
    bp = min(1.0, math.exp(1 - len(g) / len(p)))
    return bp * math.exp(sum(logs) / orders)


def acc(p, g):
    m = max(len(p), len(g))
    if m == 0:
        return 1.0
    return sum(1 for a, b in zip(p, g) if a == b) / m


PAIRS = [
    ("a b c", ["b c d"], [1, 2, 3], [2, 3, 4]),
    ("14", ["14"], [14], [14]),
    ("Yes.", ["yes"], [7], [7]),
    ("Buddhist", ["Sikh"], [1], [2]),
    (" The Jets ", ["jets"], [5, 6], [6]),
    ("the cat sat on the mat", ["the cat sat on the mat"], [1, 2, 3, 4, 1, 5], [1, 2, 3, 4, 1, 5]),
    ("the cat sat", ["the cat sat on the mat"], [1, 2, 3], [1, 2, 3, 4, 1, 5]),
    ("", ["something"], [], [9]),
    ("", [""], [], []),
    ("revenue grew 12 percent", ["revenue grew by 12 percent"], [1, 2, 3, 4], [1, 2, 5, 3, 4]),
    ("no", ["yes", "maybe", "no"], [0], [0]),
    ("Maybe.", ["maybe"], [3, 4], [4, 3]),
    ("a a a b", ["a b b"], [1, 1, 1, 2], [1, 2, 2]),
    ("The patients had a lower risk of stroke.", ["Patients had lower stroke risk"], [1, 2, 3], [1, 2, 3]),
    ("80 yards in the third quarter", ["80 yards"], [8, 0, 1], [8, 0]),
    ("(Paris), France!", ["paris france"], [1, 2], [1, 2]),
    ("x y z w v", ["v w z y x"], [1, 2, 3, 4, 5], [5, 4, 3, 2, 1]),
    ("data support this finding", ["the data support the finding"], [1, 2, 3], [1, 2, 4]),
    ("an apple", ["apple", "an orange"], [1], [1, 2, 3, 4]),
    ("it is not significant", ["significant"], [1, 2, 3, 4], [4]),
]

rows = []
for pred, golds, pid, gid in PAIRS:
    f = max(f1_one(pred, g) for g in golds)
    rows.append({
        "prediction": pred,
        "golds": golds,
        "pred_ids": pid,
        "gold_ids": gid,
        "em": em(pred, golds),
        "f1": float(f),
        "f1_fraction": f"{f.numerator}/{f.denominator}",
        "bleu": max(bleu(pred, g) for g in golds),
        "token_accuracy": acc(pid, gid),
    })
print(json.dumps(rows, indent=1))
