"""
COCO annotation sets: building, serializing, validating
=======================================================

Builds a two-image instance-segmentation set by hand, writes it to COCO
bytes, parses it back, and runs the geometry validator against a
deliberately sloppy annotation to show what the findings look like.
"""

from arminspect import coco

# ---------------------------------------------------------------------------
# the category vocabulary is fixed: one healthy class and three defect classes

categories = coco.default_categories()
for cat in categories:
    print(f"category {cat.category_id}: {cat.name} ({cat.health.value})")

# ---------------------------------------------------------------------------
# two images, three instances

images = (
    coco.ImageEntry(image_id=1, file_name="pole_007.png", width=640, height=480),
    coco.ImageEntry(image_id=2, file_name="pole_012.png", width=640, height=480),
)

# a healthy crossarm: one rectangular ring
healthy = coco.InstanceAnnotation(
    annotation_id=1, image_id=1, category_id=1,
    bbox=(120.0, 200.0, 300.0, 40.0),
    segmentation=((120.0, 200.0, 420.0, 200.0, 420.0, 240.0, 120.0, 240.0),),
    area=12000.0)

# an arm with a decay hole: outer ring plus an interior ring, even-odd fill
arm_with_hole = coco.InstanceAnnotation(
    annotation_id=2, image_id=2, category_id=4,
    bbox=(100.0, 180.0, 320.0, 50.0),
    segmentation=(
        (100.0, 180.0, 420.0, 180.0, 420.0, 230.0, 100.0, 230.0),
        (200.0, 195.0, 260.0, 195.0, 260.0, 215.0, 200.0, 215.0),
    ),
    area=14800.0)

# the decay region itself, annotated as its own instance of the same class
decay_region = coco.InstanceAnnotation(
    annotation_id=3, image_id=2, category_id=4,
    bbox=(200.0, 195.0, 60.0, 20.0),
    segmentation=((200.0, 195.0, 260.0, 195.0, 260.0, 215.0, 200.0, 215.0),),
    area=1200.0)

aset = coco.AnnotationSet(images=images,
                          annotations=(healthy, arm_with_hole, decay_region),
                          categories=categories)
coco.check_references(aset)
print(f"\n{len(aset.images)} images, {len(aset.annotations)} annotations")

# ---------------------------------------------------------------------------
# round trip through bytes

blob = coco.write_coco(aset)
print(f"serialized to {len(blob)} bytes")

parsed = coco.parse_coco(blob)
assert parsed == aset
assert coco.write_coco(parsed) == blob
print("parse(write(aset)) == aset, and bytes are stable")

# ---------------------------------------------------------------------------
# the validator reports geometry problems as findings, not exceptions

sloppy = coco.InstanceAnnotation(
    annotation_id=9, image_id=1, category_id=2,
    bbox=(0.0, 0.0, 600.0, 400.0),  # far looser than the polygon below
    segmentation=((120.0, 200.0, 420.0, 200.0, 420.0, 240.0, 120.0, 240.0),),
    area=12000.0)
messy = coco.AnnotationSet(images=images, annotations=(healthy, sloppy),
                           categories=categories)
report = coco.validate_annotations(messy)
print(f"\nvalidator on a loose bbox: clean={report.is_clean}")
print(report.summary())
