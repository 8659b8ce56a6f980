"""Grace vs depgraph graph sizes across unreachable-coverage fractions.

Prints measured reduction next to the generator's own bookkeeping.
"""
import argparse
from statistics import fmean

from depfl.assembly import Mode, assemble, reduction_stats
from depfl.synthetic import GeneratorConfig, generate


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=50)
    ap.add_argument("--methods", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print("unreachable,nodes_before,nodes_after,edges_before,edges_after,pct_nodes,pct_edges,"
          "expected_pct_nodes,expected_pct_edges")
    for frac in (0.0, 0.25, 0.5, 0.75):
        stats, expected = [], []
        for i in range(args.instances):
            gen = generate(GeneratorConfig(seed=args.seed * 10_000 + i, n_methods=args.methods,
                                           unreachable_covered_fraction=frac))
            stats.append(reduction_stats(assemble(gen.instance, Mode.GRACE),
                                         assemble(gen.instance, Mode.DEPGRAPH)))
            expected.append(gen.truth.expected_pct())
        nb, na = sum(s.nodes_before for s in stats), sum(s.nodes_after for s in stats)
        eb, ea = sum(s.edges_before for s in stats), sum(s.edges_after for s in stats)
        total = reduction_stats((nb, eb), (na, ea))
        print(f"{frac},{nb},{na},{eb},{ea},{total.pct_nodes:.2f},{total.pct_edges:.2f},"
              f"{fmean(e[0] for e in expected):.2f},{fmean(e[1] for e in expected):.2f}")


if __name__ == "__main__":
    main()
