"""Build a degradation schedule for the blur operator and compare it against
uniformly spaced severities.

Greedy max-edge splitting concentrates knots where the operator changes
fastest; for blur that is the low-width end of the range.
"""

from dirac.core import RandomSource, prior_sample, squared_exponential_prior
from dirac.degrade import GaussianBlurProcess
from dirac.schedule import (
    build_distance_table,
    greedy_schedule,
    max_edge_distance,
    uniform_schedule,
)


def main():
    shape = (8, 8)
    prior = squared_exponential_prior(shape)
    proc = GaussianBlurProcess(shape)
    dataset = [prior_sample(prior, RandomSource(i)) for i in range(8)]
    table = build_distance_table(proc, dataset, n_candidates=41)

    m = 6
    greedy = greedy_schedule(table, m)
    uniform = uniform_schedule(table, m)

    print(f"{m} interior knots on {table.size} candidates")
    print("greedy knots (t, w):")
    for t, w in greedy.knots:
        print(f"  t={t:.3f}  w={w:.3f}")
    g = greedy.max_edge_trace[-1]
    u = max_edge_distance(
        table,
        [round(i * (table.size - 1) / (m + 1)) for i in range(m + 2)],
    )
    print(f"max edge distance: greedy {g:.4f} vs uniform {u:.4f}")
    print("insertion trace:", " ".join(f"{d:.4f}" for d in greedy.max_edge_trace))


if __name__ == "__main__":
    main()
