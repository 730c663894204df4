"""
Mixing experiments: how much synthetic data helps
=================================================

Builds real and synthetic training pools, composes a grid of training
manifests with increasing synthetic share, sweeps a detector whose miss
rate shrinks as the synthetic share grows, and prints the comparison
table with percent lift over the all-real baseline.
"""

import tempfile
from pathlib import Path

from arminspect import synthgen
from arminspect.detector import DetectorHandle, OracleParams
from arminspect.experiments import (
    ExperimentConfig,
    Provenance,
    ResolutionTier,
    build_manifest,
    compare_to_baseline,
    load_dataset,
    run_experiment,
)

work = Path(tempfile.mkdtemp(prefix="experiments_demo_"))

# ---------------------------------------------------------------------------
# pools: labels only (write_images=False), distinct stem prefixes so the
# three batches can never collide on image id

mix = {"none": 0.4, "split": 0.2, "break": 0.2, "decay": 0.2}


def render_pool(name, n, seed, prefix):
    cfg = synthgen.GenConfig(n_images=n, image_width=160, image_height=160,
                             defect_mix=mix, master_seed=seed)
    synthgen.generate_batch(cfg, work / name, write_images=False,
                            stem_prefix=prefix)
    return load_dataset(work / name)


real_set = render_pool("real", 40, seed=1, prefix="real_")
synth_set = render_pool("synth", 120, seed=2, prefix="synth_")
test_set = render_pool("test", 24, seed=3, prefix="test_")

real_pool = real_set.pool_images(Provenance.REAL)
synth_pool = synth_set.pool_images(Provenance.SYNTHETIC)
test_ids = [img.image_id for img in test_set.pool_images(Provenance.SYNTHETIC)]
print(f"pools: {len(real_pool)} real, {len(synth_pool)} synthetic, "
      f"{len(test_ids)} held-out test")

# ---------------------------------------------------------------------------
# grid: same real core, growing synthetic share; the oracle detector
# stands in for a trained model, missing less as more training data is mixed

grid = [("Baseline", 0), ("Exp1", 60), ("Exp2", 120)]
results = []
for name, n_synth in grid:
    miss = 0.4 * (1.0 - n_synth / 120)
    detector = DetectorHandle.oracle(OracleParams(
        miss_rate=miss, fp_per_image=0.4, box_jitter_sigma=1.5, seed=5))
    cfg = ExperimentConfig(
        name=name, real_train=36, synthetic_train=n_synth,
        resolution_tier=ResolutionTier.R1K, detector=detector,
        test_manifest=test_set.manifest.name, seed=17)
    manifest = build_manifest(real_pool, synth_pool, cfg, test_ids)
    comp = manifest.composition
    print(f"\n{name}: {comp.real_count} real + {comp.synthetic_count} synthetic, "
          f"miss_rate {miss:.2f}")
    result = run_experiment(cfg, manifest, test_set, work / "results")
    print(f"  box mAP@[.50:.95] {result.map_value:.4f}, "
          f"AP50 {result.eval.ap50:.4f}, "
          f"mask mAP {result.mask_eval.map_50_95:.4f}")
    results.append(result)

# ---------------------------------------------------------------------------
# comparison table, exactly what `arminspect experiment compare` prints

table = compare_to_baseline(results, "Baseline")
print()
print(table.to_text())

print("\nas csv:")
print(table.to_csv().strip())

# results are persisted one directory per experiment
print("\npersisted artifacts:")
for path in sorted((work / "results").glob("*/*")):
    print(f"  {path.relative_to(work)}")
