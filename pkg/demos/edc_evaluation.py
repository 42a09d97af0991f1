"""Error-versus-reject evaluation on a synthetic verification set.

Simulates a verifier: genuine pairs score high, impostor pairs low, and a
slice of genuine pairs is corrupted so they fall below threshold. Pair
qualities are built to partially predict those failures. The curve then
shows FNMR dropping as the lowest-quality pairs are rejected.

    python3 demos/edc_evaluation.py
"""
import tempfile
from pathlib import Path

import numpy as np

from vitiq import (
    VerificationPair,
    default_reject_grid,
    edc_curve,
    spearman,
    threshold_at_fmr,
    write_edc_curve,
)


def synth_pairs(n_genuine=120, n_impostor=120, corrupt=18, seed=42):
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n_genuine):
        corrupted = i < corrupt
        sim = rng.uniform(0.05, 0.32) if corrupted else rng.uniform(0.55, 0.95)
        # quality correlates with failure, with noise so the ranking is imperfect
        qual = float(np.clip((0.15 if corrupted else 0.6) + rng.normal(0, 0.1), 0, 1))
        pairs.append(VerificationPair(f"g{i}a", f"g{i}b", float(sim), True,
                                      quality_a=qual,
                                      quality_b=float(rng.uniform(0.5, 0.9))))
    for i in range(n_impostor):
        pairs.append(VerificationPair(f"i{i}a", f"i{i}b",
                                      float(rng.uniform(0.0, 0.45)), False,
                                      quality_a=float(rng.uniform(0.2, 0.9)),
                                      quality_b=float(rng.uniform(0.2, 0.9))))
    return pairs


def run() -> None:
    pairs = synth_pairs()
    impostors = [p.similarity for p in pairs if not p.is_genuine]
    target = 0.05
    thr = threshold_at_fmr(impostors, target)
    achieved = sum(s > thr for s in impostors) / len(impostors)
    print(f"threshold at FMR target {target}: {thr:.4f} "
          f"(achieved FMR {achieved:.4f})")

    curve = edc_curve(pairs, fmr_target=target, reject_grid=default_reject_grid())
    print(f"auc = {curve.auc:.6f}, pauc25 = {curve.pauc25:.6f}\n")

    print("reject fraction -> FNMR over retained genuine pairs:")
    for r, fnmr in curve.samples[::10]:
        bar = "#" * int(round(fnmr * 200))
        print(f"  r={r:4.2f}  fnmr={fnmr:.4f}  {bar}")

    # quality should rank the failures: check it predicts genuine similarity
    gen = [p for p in pairs if p.is_genuine]
    rho = spearman([p.pair_quality("min") for p in gen],
                   [p.similarity for p in gen])
    print(f"\nSpearman(pair quality, genuine similarity) = {rho:.3f}")

    out = Path(tempfile.mkdtemp(prefix="vitiq_demo_")) / "edc_curve.tsv"
    write_edc_curve(curve, out)
    print(f"curve written to {out}")


if __name__ == "__main__":
    run()
