"""Leave-one-out comparison of all techniques on synthetic corpora.

    python3 scripts/desk_experiment.py --difficulty medium --projects 2 --instances 25
"""
import argparse
import logging
import sys
import time

from depfl.evaluation import TECHNIQUES, leave_one_out
from depfl.ggnn import TrainConfig
from depfl.synthetic import GeneratorConfig, generate_corpus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--difficulty", nargs="+", default=["easy", "medium", "hard"])
    ap.add_argument("--projects", type=int, default=2)
    ap.add_argument("--instances", type=int, default=25)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--techniques", default=",".join(TECHNIQUES))
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    techniques = args.techniques.split(",")
    for k, difficulty in enumerate(args.difficulty):
        t0 = time.perf_counter()
        corpus = generate_corpus(GeneratorConfig(seed=args.seed + k, difficulty=difficulty),
                                 args.instances, args.projects)
        report = leave_one_out(corpus, techniques, TrainConfig(), jobs=args.jobs)
        print(f"# {difficulty} ({time.perf_counter() - t0:.0f}s)")
        sys.stdout.write(report.to_csv())
        print()


if __name__ == "__main__":
    main()
