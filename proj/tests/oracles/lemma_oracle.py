"""Geometric oracle for the minimum ratio: realizes the anchor, positive and
negative in R^3 (or reads them from an embedding dump), moves the anchor in its
tangent plane and root-finds the smallest ratio that does not increase the
distance to the projected positive."""

import pathlib
import struct

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from emit import HERE, write_inc

DATA = HERE.parent / "data"


def min_ratio(h, hp, hn, lam):
    p = hp - (h @ hp) * h
    n = hn - (h @ hn) * h
    base = p @ p

    def excess(r):
        x = lam * (r * p - n)
        return (x - p) @ (x - p) - base

    best = minimize_scalar(excess, bracket=(-1.0, 1.0), method="brent", options={"xtol": 1e-14})
    if excess(best.x) > 0:
        return None
    lo = best.x - 1.0
    while excess(lo) <= 0:
        lo = best.x - 2 * (best.x - lo)
    return brentq(excess, lo, best.x, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)


def triple(theta_pos, theta_neg, alpha):
    h = np.array([1.0, 0.0, 0.0])
    hp = np.array([np.cos(theta_pos), np.sin(theta_pos), 0.0])
    hn = np.array([np.cos(theta_neg), np.sin(theta_neg) * np.cos(alpha), np.sin(theta_neg) * np.sin(alpha)])
    return h, hp, hn


def read_embs(path):
    raw = pathlib.Path(path).read_bytes()
    assert raw[:5] == b"GLNS1"
    n, d = struct.unpack_from("<QQ", raw, 5)
    values = np.frombuffer(raw, dtype="<f8", offset=21)
    return values[: n * d].reshape(n, d), values[n * d:].reshape(n, d)


def distribution(anchors, positives, lam):
    sims = anchors @ positives.T
    values, infeasible, skipped = [], 0, 0
    for i in range(len(anchors)):
        row = sims[i].copy()
        row[i] = -np.inf
        j = int(np.argmax(row))
        h, hp, hn = anchors[i], positives[i], positives[j]
        if np.linalg.norm(hp - (h @ hp) * h) < 1e-12:
            skipped += 1
            continue
        r = min_ratio(h, hp, hn, lam)
        if r is None:
            infeasible += 1
        else:
            values.append(r)
    values = np.array(values)
    frac = float((values > 1.0).mean()) if len(values) else 0.0
    return frac, len(values), infeasible, skipped


def main():
    scalars = {"kLemmaHalfPi3Pi2Pi4": min_ratio(*triple(np.pi / 3, np.pi / 2, np.pi / 4), 0.5)}
    anchors, positives = read_embs(DATA / "toy_seed1.embs")
    for lam, tag in ((0.1, "Tenth"), (0.5, "Half"), (1.0, "One")):
        frac, count, infeasible, skipped = distribution(anchors, positives, lam)
        scalars[f"kToyFractionAbove1Lambda{tag}"] = frac
        scalars[f"kToyValuesLambda{tag}"] = count
        scalars[f"kToyInfeasibleLambda{tag}"] = infeasible
        scalars[f"kToySkippedLambda{tag}"] = skipped
    write_inc("lemma_oracle.inc", "lemma_oracle.py", scalars=scalars)


if __name__ == "__main__":
    main()
