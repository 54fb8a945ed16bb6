"""Tests for depthkit.glkam module."""

import numpy as np
import pytest

from depthkit.exceptions import ShapeError
from depthkit.glkam import (
    LKA_GROUPS,
    GlkamState,
    glkam_forward,
    lka_branch,
    mlka,
    mlka_branch_feature,
    mlka_merge,
    mlka_split,
)
from depthkit.gradcheck import check_gradients, random_projection
from depthkit.params import ParameterStore
from depthkit.tensor import tensor


def build(channels: int, seed: int = 0) -> tuple[ParameterStore, GlkamState]:
    store = ParameterStore(seed=seed)
    return store, GlkamState(store.scope("glkam.1"), channels)


class TestLkaGroups:
    """Tests for the fixed group table."""

    def test_cascades(self):
        assert [(g.a, g.b, g.dilation) for g in LKA_GROUPS] == [(3, 5, 2), (5, 7, 3), (7, 9, 4)]

    def test_receptive_extents(self):
        assert [g.receptive_extent for g in LKA_GROUPS] == [11, 23, 39]


class TestGlkamState:
    """Tests for GlkamState class."""

    def test_parameter_names(self):
        store, _ = build(6)
        names = store.names()

        assert "glkam.1.lka2.dilated.weight" in names
        assert "glkam.1.fusion_mlp.w1" in names
        assert all(name.startswith("glkam.1.") for name in names)

    def test_entry_widens_to_multiple_of_three(self):
        _, state = build(4)

        assert state.split_channels == 6
        assert [b.channels for b in state.branches] == [2, 2, 2]


class TestMlka:
    """Tests for lka_branch and mlka functions."""

    def test_zero_input_gives_zero(self):
        _, state = build(6)
        out = mlka(tensor(np.zeros((6, 8, 8))), state)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_branch_zero_input(self):
        _, state = build(6)
        branch = state.branches[1]
        out = lka_branch(tensor(np.zeros((2, 8, 8))), branch.group, branch)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_branch_channel_mismatch(self):
        _, state = build(6)
        branch = state.branches[0]
        with pytest.raises(ShapeError, match="expects 2 channels"):
            lka_branch(tensor(np.zeros((3, 8, 8))), branch.group, branch)

    def test_silenced_groups_ignore_their_channels(self, rng):
        _, state = build(6, seed=5)
        for branch in state.branches[1:]:
            branch.point.weight.data[:] = 0.0
            branch.point.bias.data[:] = 0.0
        parts = mlka_split(tensor(rng.normal(size=(6, 8, 8))), state)
        baseline = mlka_merge(parts, state).data

        nudged = [parts[0], parts[1] + tensor(rng.normal(size=(2, 8, 8))), parts[2] * 3.0]
        np.testing.assert_array_equal(mlka_merge(nudged, state).data, baseline)

        moved = [parts[0] + 1.0, parts[1], parts[2]]
        assert not np.allclose(mlka_merge(moved, state).data, baseline)


class TestGlkamForward:
    """Tests for glkam_forward function."""

    @pytest.mark.parametrize("channels", [4, 6, 12, 48])
    def test_shape_preserved(self, channels, rng):
        _, state = build(channels)
        x = tensor(rng.normal(size=(channels, 8, 8)))
        assert glkam_forward(x, state).shape == (channels, 8, 8)

    def test_zero_input_gives_zero(self):
        _, state = build(6)
        out = glkam_forward(tensor(np.zeros((6, 8, 8))), state)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_output_is_convex_blend(self, rng):
        _, state = build(6, seed=4)
        tol = 1e-5
        for _ in range(100):
            x = tensor(rng.normal(scale=rng.uniform(0.1, 2.0), size=(6, 8, 8)))

            f_m = mlka_branch_feature(x, state).data
            out = glkam_forward(x, state).data

            assert np.all(out >= np.minimum(x.data, f_m) - tol)
            assert np.all(out <= np.maximum(x.data, f_m) + tol)

    def test_zero_ffn_projection_silences_branch(self, rng):
        _, state = build(6)
        state.ffn_project.weight.data[:] = 0.0
        x = tensor(rng.normal(size=(6, 8, 8)))

        np.testing.assert_array_equal(mlka_branch_feature(x, state).data, 0.0)

    def test_saturated_gate_passes_input_through(self, rng):
        _, state = build(6)
        state.fusion_mlp.output_bias.data[:] = 40.0
        x = tensor(rng.normal(size=(6, 8, 8)))

        np.testing.assert_allclose(glkam_forward(x, state).data, x.data, atol=1e-6)

    def test_wrong_channels(self):
        _, state = build(6)
        with pytest.raises(ShapeError, match="expected 6 channels"):
            glkam_forward(tensor(np.zeros((5, 8, 8))), state)

    def test_gradcheck(self, rng, float64):
        store, state = build(3, seed=9)
        x = tensor(rng.normal(size=(3, 8, 8)))
        params = list(store)
        project = random_projection((3, 8, 8))

        report = check_gradients(
            lambda: project(glkam_forward(x, state)), [x, *params], max_entries=6
        )

        assert report.passed(1e-4)
