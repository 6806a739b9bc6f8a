import numpy as np

from gapmon.model import Event, Gap, Peek


def cells(mapping, n, q, states=("s0", "s1")):
    """Build a belief from {(x, 'sK'): p}."""
    alpha = np.zeros((n, q))
    for (x, m), p in mapping.items():
        alpha[x, states.index(m)] = p
    return alpha


def items(text):
    """'evt a, gap g1, peek p1' -> trace items."""
    kinds = {"evt": Event, "gap": Gap, "peek": Peek}
    out = []
    for part in text.split(","):
        part = part.strip()
        if part:
            kind, token = part.split()
            out.append(kinds[kind](token))
    return out
