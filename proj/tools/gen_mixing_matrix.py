"""Regenerates assets/instruction_mixing_8.txt (doubly-stochastic, seed 0)."""
import sys

import numpy as np


def sinkhorn(m, iters=10_000, tol=1e-15):
    for _ in range(iters):
        m = m / m.sum(axis=1, keepdims=True)
        m = m / m.sum(axis=0, keepdims=True)
        if np.abs(m.sum(axis=1) - 1).max() < tol:
            break
    return m


def main():
    size = int(sys.argv[1]) if len(sys.argv) > 1 else 8
    rng = np.random.default_rng(0)
    # Diagonal-heavy so a fully mixed instruction still leans toward its goal.
    raw = rng.uniform(0.05, 1.0, size=(size, size)) + 1.5 * np.eye(size)
    m = sinkhorn(raw)
    for row in m:
        print(" ".join(f"{v:.17g}" for v in row))


if __name__ == "__main__":
    main()
