import math

import pytest
import torch

from fulltilt.geometry import Point3D, TomogramDims, project_point
from fulltilt.model.config import ModelConfig
from fulltilt.model.decoder import ScoreHead, project_anchors_to_tilt
from fulltilt.model.queries import EncoderBoxHead, QueryInitializer, level_grid

CFG = ModelConfig(c=16, l_aa=1, l_vp=1, l_d=2, m=4, n_levels=2, strides=(4, 8),
                  n_heads=2, n_points=2)


class TestEncoderBoxHead:
    def test_zero_init_centers_on_grid(self):
        head = EncoderBoxHead(16)
        # the refinement MLP's last layer is zero-initialized by construction,
        # but hidden layers still produce nonzero activations; zero them fully
        for layer in head.mlp.layers:
            torch.nn.init.constant_(layer.weight, 0.0)
            torch.nn.init.constant_(layer.bias, 0.0)
        grid = level_grid(4, 4, "cpu", torch.float32)
        boxes = head(torch.randn(16, 16), grid)
        assert torch.allclose(boxes[:, :2], grid, atol=1e-6)
        assert torch.allclose(boxes[:, 2], torch.full((16,), 0.5))

    def test_default_init_centers_on_grid(self):
        head = EncoderBoxHead(16)
        grid = level_grid(3, 5, "cpu", torch.float32)
        boxes = head(torch.randn(15, 16), grid)
        assert torch.allclose(boxes[:, :2], grid, atol=1e-6)

    def test_centers_bounded(self):
        head = EncoderBoxHead(16)
        for layer in head.mlp.layers:
            torch.nn.init.normal_(layer.weight, std=0.5)
        boxes = head(torch.randn(40, 16), level_grid(8, 5, "cpu", torch.float32))
        assert (boxes > 0).all() and (boxes < 1).all()


class TestQueryInitializer:
    def make(self, m=4, enable=True):
        cfg = ModelConfig(c=16, l_aa=1, l_vp=1, l_d=2, m=m, n_levels=2, strides=(4, 8),
                          n_heads=2, n_points=2, enable_tilt_init=enable)
        torch.manual_seed(1)
        return QueryInitializer(cfg)

    def z_star(self):
        g = torch.Generator().manual_seed(2)
        return [torch.randn(16, 4, 4, generator=g), torch.randn(16, 2, 2, generator=g)]

    def test_location_count(self):
        qi = self.make()
        feats, grid = qi.flatten_star(self.z_star())
        assert feats.shape[0] == 4 * 4 + 2 * 2
        assert grid.shape == (20, 2)

    def test_tied_scores_take_scan_order(self):
        qi = self.make()
        protos = torch.zeros(2, 16)  # all scores equal
        out = qi(self.z_star(), protos, torch.tensor(0.0))
        assert out["top_indices"].tolist() == [0, 1, 2, 3]

    def test_selection_matches_sort_oracle(self):
        qi = self.make(m=6)
        protos = torch.randn(3, 16)
        out = qi(self.z_star(), protos, torch.tensor(0.3))
        scores = (qi.flatten_star(self.z_star())[0] @ protos.t() + 0.3).max(-1).values
        picked = scores[out["top_indices"]]
        assert (picked[:-1] >= picked[1:] - 1e-7).all()
        unpicked = torch.tensor([s for i, s in enumerate(scores) if i not in set(out["top_indices"].tolist())])
        assert picked.min() >= unpicked.max() - 1e-7

    def test_initial_z_is_half(self):
        qi = self.make()
        out = qi(self.z_star(), torch.randn(2, 16), torch.tensor(0.0))
        anchors = torch.sigmoid(out["anchor_logits"])
        assert torch.all(anchors[:, 2] == 0.5)

    def test_rejects_m_over_locations(self):
        qi = self.make(m=21)
        with pytest.raises(ValueError):
            qi(self.z_star(), torch.randn(2, 16), torch.tensor(0.0))

    def test_disabled_init_uses_fixed_random_anchors(self):
        qi = self.make(enable=False)
        a = qi(self.z_star(), torch.randn(2, 16), torch.tensor(0.0))["anchor_logits"]
        b = qi(self.z_star(), torch.randn(2, 16), torch.tensor(0.0))["anchor_logits"]
        assert torch.equal(a, b)
        anchors = torch.sigmoid(a)
        assert ((anchors > 0) & (anchors < 1)).all()


class TestAnchorProjection:
    def test_matches_geometry_module(self):
        g = torch.Generator().manual_seed(4)
        dims = TomogramDims(200, 100, 80)
        anchors = torch.rand(30, 4, generator=g)
        angles = torch.rand(7, generator=g) * 120 - 60
        theta = torch.deg2rad(angles)
        x_norm, valid = project_anchors_to_tilt(anchors, theta.cos(), theta.sin(), dims)
        for t in range(7):
            for q in range(30):
                p = Point3D(float(anchors[q, 0]) * 200, float(anchors[q, 1]) * 100, float(anchors[q, 2]) * 80)
                want_x, _ = project_point(p, float(angles[t]), dims)
                assert float(x_norm[t, q]) * 200 == pytest.approx(want_x, abs=1e-3)

    def test_center_anchor_valid_everywhere(self):
        dims = TomogramDims(64, 64, 64)
        anchors = torch.tensor([[0.5, 0.5, 0.5, 0.1]])
        angles = torch.deg2rad(torch.linspace(-89, 89, 21))
        x_norm, valid = project_anchors_to_tilt(anchors, angles.cos(), angles.sin(), dims)
        assert valid.all()
        assert torch.allclose(x_norm, torch.full_like(x_norm, 0.5), atol=1e-6)

    def test_corner_anchor_invalid_at_60_degrees(self):
        dims = TomogramDims(64, 64, 64)
        anchors = torch.tensor([[0.95, 0.5, 0.95, 0.1]])
        theta = torch.deg2rad(torch.tensor([60.0]))
        x_norm, valid = project_anchors_to_tilt(anchors, theta.cos(), theta.sin(), dims)
        assert x_norm[0, 0] == pytest.approx(0.45 * 0.5 + 0.45 * math.sqrt(3) / 2 + 0.5, abs=1e-4)
        assert not valid[0, 0]


class TestScoreHead:
    def test_single_class(self):
        head = ScoreHead()
        q = torch.randn(5, 16)
        t = torch.randn(1, 16)
        logits = head(q, t)
        assert logits.shape == (5, 1)
        want = q @ t.t() + head.bias
        assert torch.allclose(logits, want)

    def test_orthogonal_query_scores_half(self):
        head = ScoreHead()
        with torch.no_grad():
            head.bias.zero_()
        t = torch.zeros(3, 16)
        t[0, 0] = t[1, 1] = t[2, 2] = 1.0
        q = torch.zeros(2, 16)
        q[:, 5] = 3.0  # orthogonal to every prototype
        probs = torch.sigmoid(head(q, t))
        assert torch.allclose(probs, torch.full((2, 3), 0.5))

    def test_prototype_scaling_keeps_within_class_order(self):
        head = ScoreHead()
        q = torch.randn(10, 16)
        t = torch.randn(2, 16)
        base = head(q, t)
        scaled = t.clone()
        scaled[0] *= 3.0
        after = head(q, scaled)
        assert torch.equal(base[:, 0].argsort(), after[:, 0].argsort())
