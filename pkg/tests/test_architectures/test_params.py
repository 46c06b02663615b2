"""Tests for the closed-form parameter counts."""

import numpy as np
import pytest
from tests.test_architectures.conftest import small_config

from core.architectures import build_variant
from core.architectures.base import ArchitectureError, UnifiedModelConfig
from core.architectures.unified import RESNET50_PARAMETERS, count_parameters


class TestFullScale:
    def test_head(self):
        count = count_parameters(UnifiedModelConfig())
        assert count.head == 23_327_978
        assert count.encoder == 0

    def test_with_backbone(self):
        assert count_parameters(UnifiedModelConfig()).with_backbone() == 46_915_690
        assert RESNET50_PARAMETERS == 23_587_712

    def test_stages(self):
        stages = count_parameters(UnifiedModelConfig()).stages
        assert stages == {
            "projections": 6_294_528,
            "propagate_down": 5_248_000,
            "propagate_up": 5_248_000,
            "merge": 3_148_800,
            "hidden": 3_148_800,
            "classifiers": 239_850,
        }

    def test_no_message_passing_matches_final(self):
        final = count_parameters(UnifiedModelConfig())
        ablation = count_parameters(UnifiedModelConfig(variant="no_mp"))
        assert ablation.head == final.head
        assert ablation.stages["dense_chains"] == 13 * 1_049_600


class TestUnitDims:
    def test_all_ones(self):
        config = UnifiedModelConfig(
            backbone_dim=1, feature_dim=1, hidden_dim=1, n_categories=1, n_sub_categories=1, n_attributes=1,
        )
        count = count_parameters(config)
        assert count.head == 44
        assert count.total == 44

    def test_single_direction_drops_five_layers(self):
        both = count_parameters(small_config())
        down = count_parameters(small_config(directions="down"))
        assert both.head - down.head == 5 * (16 * 16 + 16)
        assert "propagate_up" not in down.stages


class TestMatchesBuiltModel:
    @pytest.mark.parametrize("overrides", [
        {},
        {"variant": "no_mp"},
        {"directions": "up"},
        {"encoder_stages": 2},
        {"variant": "backbone_indep", "encoder_stages": 2},
        {"input_mode": "images", "image_size": 8},
        {"variant": "backbone_indep", "input_mode": "images", "image_size": 16},
    ])
    def test_count(self, overrides):
        config = small_config(**overrides)
        model = build_variant(config, np.random.default_rng(0))
        assert model.num_parameters == count_parameters(config).total

    def test_backbone_indep_adds_two_last_stages(self):
        shared = count_parameters(small_config(encoder_stages=2))
        independent = count_parameters(small_config(variant="backbone_indep", encoder_stages=2))
        assert independent.encoder - shared.encoder == 2 * (8 * 8 + 8)
        assert independent.head == shared.head

    def test_backbone_indep_needs_stages(self):
        with pytest.raises(ArchitectureError):
            count_parameters(small_config(variant="backbone_indep"))

    def test_to_dict(self):
        summary = count_parameters(small_config()).to_dict()
        assert summary["total"] == summary["head"] + summary["encoder"]
        assert list(summary)[:2] == ["projections", "propagate_down"]
