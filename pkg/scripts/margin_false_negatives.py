"""Test-set false negatives when every record sits a planted margin away from the boundary.

    python scripts/margin_false_negatives.py --seeds 20 --margin 0.9
"""

import argparse

from munidistress.pipeline import PipelineConfig, run_pipeline
from munidistress.synth import SynthConfig, generate


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--margin", type=float, default=0.9)
    ap.add_argument("--n-municipalities", type=int, default=7904)
    args = ap.parse_args()

    clean = 0
    for seed in range(args.seeds):
        panel, _, truth = generate(SynthConfig(n_municipalities=args.n_municipalities, seed=seed,
                                               margin=args.margin))
        ev = run_pipeline(panel, PipelineConfig(seed=seed, threshold=0.5)).evaluation
        cm = ev.confusion
        clean += cm.fn == 0
        print(f"seed {seed:2d}: {truth.n_margin_adjusted} records moved off the band, "
              f"tp={cm.tp} fn={cm.fn} fp={cm.fp} tn={cm.tn}")
    print(f"FN = 0 in {clean}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
