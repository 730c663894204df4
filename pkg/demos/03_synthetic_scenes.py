"""
Synthetic crossarm scenes: randomization streams, defects, fidelity
===================================================================

Samples scene parameters from independent per-dimension random streams,
renders a few scenes, verifies the labels match the rendered pixels, and
generates a small reproducible dataset.
"""

import tempfile
from pathlib import Path

import numpy as np

from arminspect import synthgen
from arminspect.raster import rasterize_rings

# ---------------------------------------------------------------------------
# a generator config: scene counts, dimensions, and the defect mix

cfg = synthgen.GenConfig(
    n_images=24,
    image_width=256,
    image_height=256,
    defect_mix={"none": 0.4, "split": 0.2, "break": 0.2, "decay": 0.2},
    max_distractors=6,
    master_seed=20240517,
)
print("defect mix:", {k.value if k else "none": v for k, v in cfg.defect_mix.items()})

# ---------------------------------------------------------------------------
# each randomization dimension draws from its own counter-based stream, so
# changing one knob (say the defect mix) cannot disturb camera poses

spec = synthgen.sample_scene(cfg.master_seed, 0, cfg)
print(f"\nscene 0 camera: azimuth {spec.camera[0]:.1f} deg, "
      f"elevation {spec.camera[1]:.1f} deg, distance {spec.camera[2]:.1f} m")
print(f"scene 0 lighting: sun {spec.lighting[0]:.1f} deg, "
      f"intensity {spec.lighting[1]:.2f}")
if spec.defect is None:
    print("scene 0 defect: none")
else:
    kind, severity, location = spec.defect
    print(f"scene 0 defect: {kind.value} severity {severity:.2f} "
          f"at {location:.2f} along the arm")
print(f"scene 0 distractors: {len(spec.distractors)}")

healthy_mix = synthgen.GenConfig(
    n_images=24, image_width=256, image_height=256,
    defect_mix={"none": 1.0}, max_distractors=6, master_seed=20240517)
spec_h = synthgen.sample_scene(cfg.master_seed, 0, healthy_mix)
assert spec_h.camera == spec.camera and spec_h.pose == spec.pose
print("changing the mix left camera and pose untouched")

# ---------------------------------------------------------------------------
# defect injection follows severity scaling laws in arm-local coordinates

arm = synthgen.ArmGeometry(length=2.4, thickness=0.3)
for severity in (0.25, 0.5, 1.0):
    _, ring = synthgen.inject_defect(
        arm, (synthgen.DefectType.DECAY, severity, 0.5))
    xs, ys = ring[0::2], ring[1::2]
    area = 0.5 * abs(sum(xs[i] * ys[(i + 1) % len(ys)]
                         - xs[(i + 1) % len(xs)] * ys[i]
                         for i in range(len(xs))))
    print(f"decay severity {severity:.2f}: region area {area:.4f} m^2 "
          f"(= severity * 30% of the arm face)")

# ---------------------------------------------------------------------------
# rendering: every annotation's polygon rasterizes to exactly the pixels
# painted for that instance

scene = synthgen.render_scene(spec, cfg)
print(f"\nscene 0 rendered: {scene.image.shape}, "
      f"{len(scene.annotations)} annotation(s)")
for ann in scene.annotations:
    color = scene.colors[ann.annotation_id]
    painted = np.all(scene.image == np.array(color, np.uint8), axis=-1)
    labeled = rasterize_rings(ann.segmentation, cfg.image_width, cfg.image_height)
    assert np.array_equal(painted, labeled)
    print(f"  annotation {ann.annotation_id}: {int(ann.area)} px, "
          f"label matches render exactly")

# ---------------------------------------------------------------------------
# batch generation writes PNGs, COCO annotations, and a dataset manifest;
# the same seed reproduces the same bytes

out = Path(tempfile.mkdtemp(prefix="synth_demo_"))
manifest = synthgen.generate_batch(cfg, out / "run1")
print(f"\nwrote {manifest.composition.real_count + manifest.composition.synthetic_count} "
      f"images under {out / 'run1'}")
print(f"healthy {manifest.composition.healthy_count}, "
      f"defective {manifest.composition.defective_count}")
print("per category:", dict(manifest.composition.per_category))

synthgen.generate_batch(cfg, out / "run2")
same = (out / "run1" / "annotations.json").read_bytes() == \
       (out / "run2" / "annotations.json").read_bytes()
print(f"re-run with the same seed is byte-identical: {same}")
