import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arminspect import coco, raster


def make_set(n_images=1, annotations=(), categories=None):
    images = tuple(
        coco.ImageEntry(image_id=i + 1, file_name=f"img_{i + 1:05d}.png", width=64, height=48)
        for i in range(n_images)
    )
    if categories is None:
        categories = coco.default_categories()
    return coco.AnnotationSet(images, tuple(annotations), tuple(categories))


def square_ann(annotation_id, image_id=1, category_id=1, x=4.0, y=4.0, side=8.0):
    ring = (x, y, x + side, y, x + side, y + side, x, y + side)
    return coco.InstanceAnnotation(
        annotation_id=annotation_id,
        image_id=image_id,
        category_id=category_id,
        bbox=(x, y, side, side),
        segmentation=(ring,),
        area=side * side,
    )


class TestCategorySpec:
    def test_from_name_each_vocabulary_entry(self):
        healthy = coco.CategorySpec.from_name(1, "crossarm_healthy")
        assert healthy.health is coco.Health.HEALTHY
        assert healthy.defect_type is None
        split = coco.CategorySpec.from_name(2, "crossarm_split")
        assert split.health is coco.Health.DEFECTIVE
        assert split.defect_type is coco.DefectType.SPLIT

    def test_unknown_name_rejected(self):
        with pytest.raises(coco.MalformedDocument):
            coco.CategorySpec.from_name(1, "crossarm_rust")

    def test_defect_type_health_consistency(self):
        with pytest.raises(coco.InvariantViolation):
            coco.CategorySpec(1, "crossarm_healthy", coco.Health.HEALTHY, coco.DefectType.SPLIT)
        with pytest.raises(coco.InvariantViolation):
            coco.CategorySpec(2, "crossarm_split", coco.Health.DEFECTIVE, None)


class TestParse:
    def test_minimal_document(self):
        doc = {
            "images": [{"id": 1, "file_name": "a.png", "width": 10, "height": 10}],
            "annotations": [],
            "categories": [{"id": 1, "name": "crossarm_healthy", "supercategory": "crossarm"}],
        }
        aset = coco.parse_coco(json.dumps(doc))
        assert len(aset.images) == 1
        assert len(aset.annotations) == 0
        assert len(aset.categories) == 1

    def test_not_json(self):
        with pytest.raises(coco.MalformedDocument):
            coco.parse_coco(b"not json at all {")

    def test_not_utf8(self):
        with pytest.raises(coco.MalformedDocument):
            coco.parse_coco(b"\xff\xfe{}")

    def test_top_level_not_object(self):
        with pytest.raises(coco.MalformedDocument):
            coco.parse_coco("[1, 2, 3]")

    def test_missing_top_level_key(self):
        with pytest.raises(coco.MissingField) as exc:
            coco.parse_coco(json.dumps({"images": [], "annotations": []}))
        assert "categories" in str(exc.value)

    def test_missing_image_field_names_it(self):
        doc = {"images": [{"id": 1, "file_name": "a.png", "width": 10}],
               "annotations": [], "categories": []}
        with pytest.raises(coco.MissingField) as exc:
            coco.parse_coco(json.dumps(doc))
        assert "height" in str(exc.value)
        assert "images[0]" in str(exc.value)

    def test_dangling_image_reference(self):
        doc = {
            "images": [{"id": 1, "file_name": "a.png", "width": 10, "height": 10}],
            "annotations": [{"id": 1, "image_id": 99, "category_id": 1,
                             "bbox": [0, 0, 2, 2], "segmentation": [], "area": 4.0,
                             "iscrowd": 0}],
            "categories": [{"id": 1, "name": "crossarm_healthy", "supercategory": "crossarm"}],
        }
        with pytest.raises(coco.DanglingReference):
            coco.parse_coco(json.dumps(doc))

    def test_duplicate_annotation_ids(self):
        ann = {"id": 7, "image_id": 1, "category_id": 1, "bbox": [0, 0, 2, 2],
               "segmentation": [], "area": 4.0, "iscrowd": 0}
        doc = {
            "images": [{"id": 1, "file_name": "a.png", "width": 10, "height": 10}],
            "annotations": [ann, dict(ann)],
            "categories": [{"id": 1, "name": "crossarm_healthy", "supercategory": "crossarm"}],
        }
        with pytest.raises(coco.InvariantViolation):
            coco.parse_coco(json.dumps(doc))

    def test_bool_id_rejected(self):
        doc = {"images": [{"id": True, "file_name": "a.png", "width": 10, "height": 10}],
               "annotations": [], "categories": []}
        with pytest.raises(coco.MalformedDocument):
            coco.parse_coco(json.dumps(doc))

    def test_crowd_annotation_rejected(self):
        doc = {
            "images": [{"id": 1, "file_name": "a.png", "width": 10, "height": 10}],
            "annotations": [{"id": 1, "image_id": 1, "category_id": 1,
                             "bbox": [0, 0, 2, 2], "segmentation": [], "area": 4.0,
                             "iscrowd": 1}],
            "categories": [{"id": 1, "name": "crossarm_healthy", "supercategory": "crossarm"}],
        }
        with pytest.raises(coco.InvariantViolation):
            coco.parse_coco(json.dumps(doc))


class TestWrite:
    def test_empty_set_smallest_document(self):
        data = coco.write_coco(coco.AnnotationSet())
        assert json.loads(data) == {"images": [], "annotations": [], "categories": []}

    def test_write_twice_byte_identical(self):
        aset = make_set(annotations=[square_ann(1)])
        assert coco.write_coco(aset) == coco.write_coco(aset)

    def test_write_rejects_dangling_reference(self):
        aset = make_set(annotations=[square_ann(1, image_id=5)])
        with pytest.raises(coco.InvariantViolation):
            coco.write_coco(aset)

    def test_key_order_fixed(self):
        data = coco.write_coco(make_set(annotations=[square_ann(1)])).decode()
        assert data.index('"images"') < data.index('"annotations"') < data.index('"categories"')
        img_block = data[data.index('"images"'):data.index('"annotations"')]
        assert img_block.index('"id"') < img_block.index('"file_name"') < img_block.index('"width"')


@st.composite
def annotation_sets(draw):
    n_images = draw(st.integers(min_value=1, max_value=4))
    categories = coco.default_categories()
    images = tuple(
        coco.ImageEntry(image_id=i + 1, file_name=f"img_{i + 1:05d}.png",
                        width=draw(st.integers(8, 64)), height=draw(st.integers(8, 64)))
        for i in range(n_images)
    )
    coord = st.floats(min_value=0.0, max_value=64.0, allow_nan=False, allow_infinity=False)
    n_anns = draw(st.integers(min_value=0, max_value=6))
    annotations = []
    for a in range(n_anns):
        with_polygon = draw(st.booleans())
        x = draw(coord)
        y = draw(coord)
        w = draw(st.floats(min_value=0.5, max_value=16.0, allow_nan=False))
        h = draw(st.floats(min_value=0.5, max_value=16.0, allow_nan=False))
        seg = ((x, y, x + w, y, x + w, y + h, x, y + h),) if with_polygon else ()
        annotations.append(coco.InstanceAnnotation(
            annotation_id=a + 1,
            image_id=draw(st.integers(1, n_images)),
            category_id=draw(st.integers(1, len(categories))),
            bbox=(x, y, w, h),
            segmentation=seg,
            area=w * h,
        ))
    return coco.AnnotationSet(images, tuple(annotations), categories)


@settings(max_examples=100, deadline=None)
@given(aset=annotation_sets())
def test_round_trip_identity(aset):
    data = coco.write_coco(aset)
    reparsed = coco.parse_coco(data)
    assert reparsed == aset
    assert coco.write_coco(reparsed) == data


class TestNormalize:
    def test_relative_bbox_scaling(self):
        raw = coco.RawLabelSet(
            images=((1, "a.png"),),
            annotations=(coco.RawAnnotation(
                annotation_id=1, image_id=1, category_id=1,
                coords="relative", bbox=(0.5, 0.5, 0.25, 0.25)),),
        )
        out = coco.normalize_labels(raw, {1: (2048, 1024)})
        assert out.annotations[0].bbox == (1024.0, 512.0, 512.0, 256.0)
        assert out.images[0].width == 2048
        assert out.images[0].height == 1024
        assert out.annotations[0].area == 512.0 * 256.0

    def test_relative_polygon_scaled_and_bbox_recomputed(self):
        ring = (0.25, 0.25, 0.75, 0.25, 0.75, 0.5, 0.25, 0.5)
        raw = coco.RawLabelSet(
            images=((1, "a.png"),),
            annotations=(coco.RawAnnotation(
                annotation_id=1, image_id=1, category_id=2,
                coords="relative", bbox=(0.0, 0.0, 1.0, 1.0), segmentation=(ring,)),),
        )
        out = coco.normalize_labels(raw, {1: (100, 80)})
        ann = out.annotations[0]
        assert ann.bbox == (25.0, 20.0, 50.0, 20.0)
        assert ann.segmentation[0] == (25.0, 20.0, 75.0, 20.0, 75.0, 40.0, 25.0, 40.0)
        assert ann.area == 50 * 20  # integer-aligned rectangle covers exactly

    def test_absolute_passthrough_recomputes_bbox(self):
        ring = (10.0, 10.0, 30.0, 10.0, 30.0, 20.0, 10.0, 20.0)
        raw = coco.RawLabelSet(
            images=((1, "a.png"),),
            annotations=(coco.RawAnnotation(
                annotation_id=1, image_id=1, category_id=1,
                coords="absolute", bbox=(8.0, 8.0, 30.0, 30.0), segmentation=(ring,)),),
        )
        out = coco.normalize_labels(raw, {1: (64, 48)})
        assert out.annotations[0].bbox == (10.0, 10.0, 20.0, 10.0)

    def test_normalize_idempotent_on_absolute(self):
        ring = (10.0, 10.0, 30.0, 10.0, 30.0, 20.0, 10.0, 20.0)
        raw = coco.RawLabelSet(
            images=((1, "a.png"),),
            annotations=(coco.RawAnnotation(
                annotation_id=1, image_id=1, category_id=1,
                coords="absolute", segmentation=(ring,)),),
        )
        dims = {1: (64, 48)}
        once = coco.normalize_labels(raw, dims)
        again_raw = coco.RawLabelSet(
            images=((1, "a.png"),),
            annotations=(coco.RawAnnotation(
                annotation_id=1, image_id=1, category_id=1, coords="absolute",
                bbox=once.annotations[0].bbox,
                segmentation=once.annotations[0].segmentation),),
        )
        assert coco.normalize_labels(again_raw, dims) == once

    def test_missing_dims(self):
        raw = coco.RawLabelSet(images=((1, "a.png"), (2, "b.png")))
        with pytest.raises(coco.MissingDims):
            coco.normalize_labels(raw, {1: (10, 10)})

    def test_out_of_range_relative(self):
        raw = coco.RawLabelSet(
            images=((1, "a.png"),),
            annotations=(coco.RawAnnotation(
                annotation_id=1, image_id=1, category_id=1,
                coords="relative", bbox=(0.5, 0.5, 1.2, 0.25)),),
        )
        with pytest.raises(coco.OutOfRange):
            coco.normalize_labels(raw, {1: (100, 100)})

    def test_coords_flag_validated(self):
        with pytest.raises(coco.InvariantViolation):
            coco.RawAnnotation(annotation_id=1, image_id=1, category_id=1,
                               coords="pixels", bbox=(0, 0, 1, 1))


@settings(max_examples=60, deadline=None)
@given(
    x=st.floats(min_value=0.0, max_value=0.5, allow_nan=False),
    y=st.floats(min_value=0.0, max_value=0.5, allow_nan=False),
    w=st.floats(min_value=0.05, max_value=0.5, allow_nan=False),
    h=st.floats(min_value=0.05, max_value=0.5, allow_nan=False),
    with_polygon=st.booleans(),
)
def test_normalized_relative_input_validates_clean(x, y, w, h, with_polygon):
    seg = ((x, y, x + w, y, x + w, y + h, x, y + h),) if with_polygon else ()
    raw = coco.RawLabelSet(
        images=((1, "a.png"),),
        annotations=(coco.RawAnnotation(
            annotation_id=1, image_id=1, category_id=3,
            coords="relative", bbox=(x, y, w, h), segmentation=seg),),
    )
    out = coco.normalize_labels(raw, {1: (128, 96)})
    assert coco.validate_annotations(out).is_clean


class TestValidate:
    def test_clean_set(self):
        report = coco.validate_annotations(make_set(annotations=[square_ann(1)]))
        assert report.is_clean
        assert report.findings == ()

    def test_loose_bbox_flagged(self):
        ann = square_ann(1)
        loose = coco.InstanceAnnotation(
            annotation_id=1, image_id=1, category_id=1,
            bbox=(ann.bbox[0] - 10, ann.bbox[1], ann.bbox[2] + 10, ann.bbox[3]),
            segmentation=ann.segmentation, area=ann.area)
        report = coco.validate_annotations(make_set(annotations=[loose]))
        kinds = {f.kind for f in report.findings}
        assert "bbox_tightness" in kinds

    def test_out_of_bounds_vertex_flagged(self):
        ring = (60.0, 40.0, 70.0, 40.0, 70.0, 46.0, 60.0, 46.0)  # x > 64
        ann = coco.InstanceAnnotation(
            annotation_id=1, image_id=1, category_id=1,
            bbox=raster.rings_bbox((ring,)), segmentation=(ring,),
            area=raster.pixel_area((ring,), 64, 48))
        report = coco.validate_annotations(make_set(annotations=[ann]))
        assert report.by_kind("vertex_bounds")

    def test_area_mismatch_flagged(self):
        ann = square_ann(1)
        wrong = coco.InstanceAnnotation(
            annotation_id=1, image_id=1, category_id=1,
            bbox=ann.bbox, segmentation=ann.segmentation, area=ann.area * 2)
        report = coco.validate_annotations(make_set(annotations=[wrong]))
        assert report.by_kind("area_mismatch")

    def test_duplicate_ids_flagged(self):
        report = coco.validate_annotations(
            make_set(annotations=[square_ann(7), square_ann(7, x=20.0)]))
        dups = report.by_kind("duplicate_id")
        assert len(dups) == 1
        assert dups[0].subject_id == 7

    def test_summary_text(self):
        clean = coco.validate_annotations(make_set())
        assert "clean" in clean.summary()
        dirty = coco.validate_annotations(
            make_set(annotations=[square_ann(7), square_ann(7, x=20.0)]))
        assert "duplicate_id" in dirty.summary()
