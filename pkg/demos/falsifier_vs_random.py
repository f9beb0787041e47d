"""Best value found versus evaluations: GP-guided search against uniform sampling.

The target is a cone with its minimum of -0.2 at (0.3, 0.7) on the unit
square; any value below zero is a hit.  The disk of hits covers about 12.6%
of the square, so uniform sampling also does well here.  The gap shows in
how far below zero each method gets.

    python3 demos/falsifier_vs_random.py
"""
import numpy as np

from cegrl.falsifier import FalsifierConfig, bo_minimize, random_search

BOUNDS = np.array([[0.0, 1.0], [0.0, 1.0]])
TARGET = np.array([0.3, 0.7])


def cone(X):
    return np.linalg.norm(np.atleast_2d(X) - TARGET, axis=1) - 0.2


def running_min(values):
    return np.minimum.accumulate(values)


def main(n_seeds: int = 20, budget: int = 30) -> None:
    bo = np.array([running_min(bo_minimize(cone, BOUNDS, FalsifierConfig(seed=s, budget=budget)).values) for s in range(n_seeds)])
    rs = np.array([running_min(random_search(cone, BOUNDS, budget, s).values) for s in range(n_seeds)])
    print(f"{'evals':>5} {'BO median':>10} {'random median':>14} {'BO hits':>8} {'random hits':>12}")
    for n in (5, 8, 10, 15, 20, 25, 30):
        i = n - 1
        print(f"{n:5d} {np.median(bo[:, i]):10.4f} {np.median(rs[:, i]):14.4f} "
              f"{int((bo[:, i] < 0).sum()):8d} {int((rs[:, i] < 0).sum()):12d}")
    p_miss = (1 - np.pi * 0.2**2) ** budget
    print(f"\nchance a single uniform run of {budget} misses the disk: {p_miss:.3f}")


if __name__ == "__main__":
    main()
