import itertools

import pytest
import torch

from fulltilt.model.config import ModelConfig
from fulltilt.model.prompting import PromptEncoder, build_prompt_state, mask_from_labels

CFG = ModelConfig(c=16, l_aa=1, l_vp=2, l_d=1, m=4, n_levels=2, strides=(4, 8),
                  n_heads=2, n_points=2)


def brute_force_predicate(labels):
    s = len(labels)
    out = [[False] * s for _ in range(s)]
    for r in range(s):
        for c in range(s):
            out[r][c] = (r == c) or (labels[r] == labels[c] and labels[r] != 0)
    return out


class TestMaskFromLabels:
    def test_worked_example(self):
        # locals [1, 2] padded to 3 slots, classes {1, 2}: V = [1, 2, phi, 1, 2]
        v, a = build_prompt_state([[1, 2]], [1, 2], n_p=3)
        assert v[0].tolist() == [1, 2, 0, 1, 2]
        allowed = a[0]
        off_diagonal = {(r, c) for r in range(5) for c in range(5) if r != c and allowed[r, c]}
        assert off_diagonal == {(0, 3), (3, 0), (1, 4), (4, 1)}
        assert allowed[2].tolist() == [False, False, True, False, False]

    def test_no_local_prompts(self):
        v, a = build_prompt_state([[], []], [5], n_p=2)
        assert v[0].tolist() == [0, 0, 5]
        # global class token attends only to itself
        assert a[0][2].tolist() == [False, False, True]

    def test_symmetry_random_vectors(self):
        g = torch.Generator().manual_seed(3)
        for _ in range(50):
            labels = torch.randint(0, 4, (8,), generator=g)
            a = mask_from_labels(labels)
            assert torch.equal(a, a.T)

    def test_exhaustive_predicate_equivalence(self):
        # every label vector of length <= 6 over 3 classes plus the empty token
        alphabet = [0, 1, 2, 3]
        for length in range(1, 7):
            for combo in itertools.product(alphabet, repeat=length):
                got = mask_from_labels(torch.tensor(combo))
                want = torch.tensor(brute_force_predicate(combo))
                assert torch.equal(got, want), combo

    def test_rejects_unknown_label(self):
        with pytest.raises(ValueError):
            build_prompt_state([[7]], [1, 2])

    def test_rejects_undersized_padding(self):
        with pytest.raises(ValueError):
            build_prompt_state([[1, 1, 1]], [1], n_p=2)


def tiny_feats(n_tilts, gen):
    return [
        torch.randn(n_tilts, 16, 4, 4, generator=gen),
        torch.randn(n_tilts, 16, 2, 2, generator=gen),
    ]


class TestPromptEncoder:
    def test_prompt_order_invariance(self):
        torch.manual_seed(5)
        enc = PromptEncoder(CFG).double().eval()
        g = torch.Generator().manual_seed(9)
        feats = [f.double() for f in tiny_feats(3, g)]
        boxes = [(0.2, 0.3, 0.1, 0.1), (0.7, 0.6, 0.15, 0.15), (0.4, 0.5, 0.08, 0.08)]
        labels = [1, 2, 1]
        base = enc([boxes, [], []], [labels, [], []], feats)
        perm = [2, 0, 1]
        permuted = enc([[boxes[i] for i in perm], [], []], [[labels[i] for i in perm], [], []], feats)
        assert torch.allclose(base, permuted, atol=1e-6)

    def test_pad_count_invariance(self):
        torch.manual_seed(5)
        enc = PromptEncoder(CFG).double().eval()
        g = torch.Generator().manual_seed(9)
        feats = [f.double() for f in tiny_feats(2, g)]
        boxes = [[(0.2, 0.3, 0.1, 0.1)], [(0.6, 0.6, 0.2, 0.2)]]
        labels = [[1], [2]]
        base = enc(boxes, labels, feats)
        padded = enc(boxes, labels, feats, n_p=6)
        assert torch.allclose(base, padded, atol=1e-6)

    def test_zero_prompts_single_class_finite(self):
        torch.manual_seed(5)
        enc = PromptEncoder(CFG).eval()
        g = torch.Generator().manual_seed(9)
        feats = tiny_feats(2, g)
        protos = enc.forward_with_classes([[], []], [[], []], [3], feats)
        assert protos.shape == (1, 16)
        assert torch.isfinite(protos).all()

    def test_prototype_rows_follow_ascending_classes(self):
        torch.manual_seed(5)
        enc = PromptEncoder(CFG).eval()
        g = torch.Generator().manual_seed(9)
        feats = tiny_feats(1, g)
        protos = enc([[(0.5, 0.5, 0.1, 0.1), (0.2, 0.2, 0.1, 0.1)]], [[4, 2]], feats)
        assert protos.shape == (2, 16)
        # row order is the ascending class order [2, 4]; recompute with only
        # class 2 prompted and check the class-2 row is the one that moves
        protos_single = enc([[(0.2, 0.2, 0.1, 0.1)]], [[2]], feats)
        assert protos_single.shape == (1, 16)

    def test_requires_some_class(self):
        torch.manual_seed(5)
        enc = PromptEncoder(CFG)
        g = torch.Generator().manual_seed(9)
        with pytest.raises(ValueError):
            enc([[], []], [[], []], tiny_feats(2, g))
