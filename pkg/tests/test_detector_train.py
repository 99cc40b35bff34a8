import numpy as np
import pytest
import torch

from crabsurvey.boxes import BoundingBox
from crabsurvey.detector.assign import assign_targets, pairwise_iou
from crabsurvey.detector.model import DetectorConfig, build_detector
from crabsurvey.detector.infer import detect, load_det_checkpoint, save_det_checkpoint
from crabsurvey.detector.train import (
    DetTrainConfig,
    boxes_to_tensor,
    train_detector,
)
from crabsurvey.imaging import ImageBuffer
from crabsurvey.synthetic import make_detection_dataset


def tiny_cfg(**kw):
    defaults = dict(width_multiplier=0.125, input_side=64)
    defaults.update(kw)
    return DetectorConfig(**defaults)


@pytest.fixture
def tiles(rng):
    return make_detection_dataset(rng, 4, 64, n_crabs=2)


class TestAssigner:
    def test_pairwise_iou_identity(self):
        boxes = torch.tensor([[0.0, 0.0, 10.0, 10.0], [5.0, 5.0, 15.0, 15.0]])
        m = pairwise_iou(boxes, boxes)
        assert torch.allclose(m.diagonal(), torch.ones(2))
        assert m[0, 1] == pytest.approx(25.0 / 175.0)

    def test_no_gts_all_background(self):
        anchors = torch.tensor([[4.0, 4.0], [12.0, 4.0]])
        scores = torch.full((2, 2), 0.5)
        boxes = torch.tensor([[0.0, 0.0, 8.0, 8.0], [8.0, 0.0, 16.0, 8.0]])
        ts, tb, fg = assign_targets(anchors, scores, boxes, torch.zeros(0, 4), torch.zeros(0, dtype=torch.long), 2)
        assert not fg.any() and ts.sum() == 0

    def test_anchor_inside_gt_assigned(self):
        anchors = torch.tensor([[4.0, 4.0], [40.0, 40.0]])
        scores = torch.full((2, 2), 0.5)
        pred = torch.tensor([[0.0, 0.0, 8.0, 8.0], [36.0, 36.0, 44.0, 44.0]])
        gt = torch.tensor([[2.0, 2.0, 10.0, 10.0]])
        labels = torch.tensor([1])
        ts, tb, fg = assign_targets(anchors, scores, pred, gt, labels, 2)
        assert fg.tolist() == [True, False]
        assert torch.equal(tb[0], gt[0])
        assert ts[0, 1] > 0 and ts[0, 0] == 0

    def test_anchor_claimed_by_best_metric(self):
        anchors = torch.tensor([[5.0, 5.0]])
        scores = torch.tensor([[0.9, 0.9]])
        pred = torch.tensor([[2.0, 2.0, 8.0, 8.0]])
        gts = torch.tensor([[2.0, 2.0, 8.0, 8.0], [0.0, 0.0, 10.0, 10.0]])
        labels = torch.tensor([0, 1])
        ts, tb, fg = assign_targets(anchors, scores, pred, gts, labels, 2)
        assert fg.tolist() == [True]
        assert torch.equal(tb[0], gts[0])  # exact-overlap gt wins


class TestTraining:
    def test_zero_lr_constant_history(self, tiles):
        torch.manual_seed(0)
        model = build_detector(tiny_cfg())
        ckpt = train_detector(model, tiles, DetTrainConfig(max_epochs=3, learning_rate=0.0, seed=5))
        assert len(set(f"{v:.9f}" for v in ckpt.loss_history)) == 1

    def test_seeded_epoch0_reproducible(self, tiles):
        losses = []
        for _ in range(2):
            torch.manual_seed(9)
            model = build_detector(tiny_cfg())
            ckpt = train_detector(model, tiles, DetTrainConfig(max_epochs=1, learning_rate=1e-3, seed=9))
            losses.append(ckpt.loss_history[0])
        assert losses[0] == pytest.approx(losses[1], abs=1e-6)

    def test_empty_dataset_rejected(self):
        model = build_detector(tiny_cfg())
        with pytest.raises(ValueError):
            train_detector(model, [], DetTrainConfig(max_epochs=1))

    def test_wrong_tile_size_rejected(self, rng):
        model = build_detector(tiny_cfg())
        img = ImageBuffer(rng.uniform(0, 1, (32, 32, 3)))
        with pytest.raises(ValueError):
            train_detector(model, [(img, [])], DetTrainConfig(max_epochs=1))

    def test_loss_decreases_over_short_run(self, tiles):
        torch.manual_seed(0)
        model = build_detector(tiny_cfg())
        ckpt = train_detector(model, tiles, DetTrainConfig(max_epochs=10, learning_rate=2e-3, seed=0))
        assert ckpt.loss_history[-1] < ckpt.loss_history[0]


class TestCheckpoint:
    def test_roundtrip_and_fingerprint(self, tiles, tmp_path):
        cfg = tiny_cfg()
        torch.manual_seed(0)
        model = build_detector(cfg)
        ckpt = train_detector(model, tiles, DetTrainConfig(max_epochs=1, seed=0))
        path = tmp_path / "det.pt"
        save_det_checkpoint(ckpt, path)
        reloaded, back = load_det_checkpoint(path, cfg)
        assert back.epoch == 1
        img = tiles[0][0]
        np.testing.assert_allclose(
            [d.confidence for d in detect(model, img, conf_threshold=0.01)],
            [d.confidence for d in detect(reloaded, img, conf_threshold=0.01)],
            atol=1e-7,
        )
        with pytest.raises(ValueError):
            load_det_checkpoint(path, tiny_cfg(eca=True))


class TestDetect:
    def test_resizes_foreign_sizes(self, rng):
        model = build_detector(tiny_cfg())
        img = ImageBuffer(rng.uniform(0, 1, (100, 100, 3)))
        dets = detect(model, img, conf_threshold=0.9)
        assert isinstance(dets, list)

    def test_rejects_gray(self, rng):
        model = build_detector(tiny_cfg())
        img = ImageBuffer(rng.uniform(0, 1, (64, 64, 1)))
        with pytest.raises(ValueError):
            detect(model, img)


def test_boxes_to_tensor_layout():
    boxes = [BoundingBox(1, 0.5, 0.5, 0.25, 0.5, confidence=0.9)]
    t = boxes_to_tensor(boxes, 64)
    assert t.shape == (1, 5)
    assert t[0].tolist() == [1.0, 24.0, 16.0, 40.0, 48.0]
    assert boxes_to_tensor([], 64).shape == (0, 5)
