"""测试领域模型与语料校验"""
import math

import pytest

from geoweak.core.models import (
    Annotation, BBox, ClassTable, Dataset, GeoPoint, ImageRecord, OrientedBox, PixelPoint,
    Provenance, PseudoAnnotation, Split,
)
from geoweak.core.validation import ViolationKind, validate_dataset


def box_ann(ann_id, box, class_id=0, **kwargs):
    return Annotation(id=ann_id, class_id=class_id, box=box, **kwargs)


@pytest.fixture
def dataset():
    """2 张图像：一张带 2 个框，一张负样本"""
    return Dataset(
        class_table=ClassTable.single_class(),
        images=(
            ImageRecord(1, 100, 100, (
                box_ann(1, BBox(10, 10, 30, 30)),
                box_ann(2, BBox(50, 50, 90, 80)),
            ), country="US", centroid_geo=GeoPoint(40.0, -100.0)),
            ImageRecord(2, 100, 100),
        ),
    )


class TestBBox:
    """测试轴对齐框"""

    def test_xywh_conversion(self):
        box = BBox.from_xywh(10, 20, 30, 40)
        assert (box.xmin, box.ymin, box.xmax, box.ymax) == (10, 20, 40, 60)
        assert box.to_xywh() == (10, 20, 30, 40)

    def test_area_and_diagonal(self):
        box = BBox(0, 0, 3, 4)
        assert box.area == 12
        assert box.diagonal == 5

    def test_validity(self):
        assert BBox(0, 0, 1, 1).is_valid()
        assert not BBox(0, 0, 0, 1).is_valid()
        assert not BBox(0, 0, math.inf, 1).is_valid()
        assert not BBox(5, 5, 1, 1).is_valid()

    def test_oriented_box_needs_eight_coordinates(self):
        with pytest.raises(ValueError):
            OrientedBox.from_flat([0, 0, 1, 1, 2, 2])


class TestClassTable:
    """测试类别表"""

    def test_single_class(self):
        table = ClassTable.single_class()
        assert table.ids == [0]
        assert table.name_of(0) == "wind_turbine"

    def test_fair1m_classes(self):
        table = ClassTable.fair1m()
        assert len(table) == 5
        assert table.id_of("airplane") == 2

    def test_gaps_are_reported(self):
        from geoweak.core.models import ClassEntry
        table = ClassTable((ClassEntry(0, "a"), ClassEntry(2, "b")))
        assert table.problems()


class TestAnnotation:
    """测试标注约束"""

    def test_needs_exactly_one_geometry(self):
        with pytest.raises(ValueError):
            Annotation(id=1, class_id=0)
        with pytest.raises(ValueError):
            Annotation(id=1, class_id=0, box=BBox(0, 0, 1, 1), point=PixelPoint(0, 0))

    def test_pseudo_must_contain_source(self):
        ann = PseudoAnnotation(id=1, class_id=0, box=BBox(0, 0, 10, 10),
                               source_pixel=PixelPoint(10, 5), score=0.5)
        assert ann.provenance == Provenance.PSEUDO
        assert ann.is_pseudo

        with pytest.raises(ValueError):
            PseudoAnnotation(id=2, class_id=0, box=BBox(0, 0, 10, 10),
                             source_pixel=PixelPoint(11, 5))


class TestDataset:
    """测试数据集容器"""

    def test_counts(self, dataset):
        assert dataset.counts() == {"images": 2, "boxes": 2, "points": 0}
        assert dataset.max_annotation_id() == 2

    def test_subset_keeps_order(self, dataset):
        sub = dataset.subset([2, 1])
        assert sub.image_ids == [1, 2]
        assert dataset.subset([2]).image_ids == [2]

    def test_lookup(self, dataset):
        assert dataset.image_by_id(1).is_positive
        assert not dataset.image_by_id(2).is_positive
        assert dataset.image_by_id(99) is None

    def test_split_order(self):
        assert [s.value for s in sorted(Split, key=Split.sort_order)] == [
            "train", "val", "test", "teacher_eval"
        ]


class TestValidateDataset:
    """测试语料校验"""

    def test_clean_dataset(self, dataset):
        report = validate_dataset(dataset)
        assert report.ok
        assert (report.images, report.boxes, report.points) == (2, 2, 0)

    def test_out_of_bounds_box(self):
        d = Dataset(ClassTable.single_class(), (
            ImageRecord(1, 50, 50, (box_ann(1, BBox(40, 40, 60, 60)),)),
        ))
        report = validate_dataset(d)
        assert ViolationKind.OUT_OF_BOUNDS in report.by_kind()

    def test_degenerate_and_unknown_class(self):
        d = Dataset(ClassTable.single_class(), (
            ImageRecord(1, 50, 50, (
                box_ann(1, BBox(10, 10, 10, 20)),
                box_ann(2, BBox(0, 0, 5, 5), class_id=3),
            )),
        ))
        kinds = validate_dataset(d).by_kind()
        assert kinds[ViolationKind.DEGENERATE_BOX] == 1
        assert kinds[ViolationKind.UNKNOWN_CLASS] == 1

    def test_duplicate_ids(self):
        d = Dataset(ClassTable.single_class(), (
            ImageRecord(1, 50, 50, (box_ann(7, BBox(0, 0, 5, 5)),)),
            ImageRecord(1, 50, 50, (box_ann(7, BBox(0, 0, 5, 5)),)),
        ))
        kinds = validate_dataset(d).by_kind()
        assert kinds[ViolationKind.DUPLICATE_ID] == 1
        assert kinds[ViolationKind.DUPLICATE_ANNOTATION_ID] == 1

    def test_invalid_geo_and_score(self):
        d = Dataset(ClassTable.single_class(), (
            ImageRecord(1, 50, 50, (
                box_ann(1, BBox(0, 0, 5, 5), source_geo=GeoPoint(91.0, 0.0)),
                box_ann(2, BBox(0, 0, 5, 5), score=1.5),
            )),
        ))
        kinds = validate_dataset(d).by_kind()
        assert kinds[ViolationKind.INVALID_GEO] == 1
        assert kinds[ViolationKind.INVALID_SCORE] == 1

    def test_validation_does_not_raise(self):
        d = Dataset(ClassTable.single_class(), (ImageRecord(1, 0, 10),))
        report = validate_dataset(d)
        assert not report.ok
        assert report.violations[0].kind == ViolationKind.INVALID_SIZE
