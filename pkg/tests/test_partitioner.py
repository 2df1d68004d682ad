import json

import numpy as np
import pytest

from baoc.config_space import BlockShape
from baoc.partitioner import (
    PartitionParams,
    StructuralUnit,
    compute_tau,
    load_model_description,
    pairwise_difference,
    partition,
    partition_to_json_dict,
)
from baoc.risk import RiskSignals


def sig(geometry, momentum=0.5, distortion=0.3, structure=0.2):
    return RiskSignals(geometry=geometry, momentum=momentum, distortion=distortion,
                       structure=structure, precision={32: 0.0})


def make_units(values, sizes=None):
    sizes = sizes or [10_000] * len(values)
    units, signals = [], {}
    for i, (v, n) in enumerate(zip(values, sizes)):
        units.append(StructuralUnit(id=i, name=f"u{i}", shape=BlockShape((n,))))
        signals[i] = sig(v)
    return units, signals


TWO_CLUSTERS = [0.13, 0.12, 0.11, 0.10, 0.90, 0.89, 0.88, 0.87]


class TestPairwiseDifference:
    def test_identical_is_zero(self):
        assert pairwise_difference((0.3, 0.4), (0.3, 0.4)) == 0.0

    def test_max_component(self):
        assert pairwise_difference((0.9, 0.1), (0.1, 0.1)) == pytest.approx(0.8, abs=1e-12)

    def test_weights_mask_components(self):
        assert pairwise_difference((0.9, 0.1), (0.1, 0.1), weights=(0.0, 1.0)) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            pairwise_difference((1.0,), (1.0, 2.0))


class TestPartition:
    def test_two_clusters_split_exactly_once(self):
        units, signals = make_units(TWO_CLUSTERS)
        blocks = partition(units, signals, PartitionParams(alpha=0.01))
        assert blocks == [[0, 1, 2, 3], [4, 5, 6, 7]]

    def test_identical_signals_one_block(self):
        units, signals = make_units([0.5] * 8)
        assert partition(units, signals, PartitionParams(alpha=0.01)) == [[0, 1, 2, 3, 4, 5, 6, 7]]

    def test_tiny_unit_merges_into_closest_cluster(self):
        # Tiny unit 4 carries the right cluster's signal; it must join it.
        values = [0.13, 0.12, 0.11, 0.10, 0.90, 0.90, 0.89, 0.88, 0.87]
        sizes = [10_000] * 4 + [50] + [10_000] * 4
        units, signals = make_units(values, sizes)
        blocks = partition(units, signals, PartitionParams(alpha=0.01))
        assert blocks == [[0, 1, 2, 3], [4, 5, 6, 7, 8]]

    @pytest.mark.parametrize("tiny_value,expected", [(0.85, [[0], [1, 2]]), (0.15, [[0, 1], [2]])])
    def test_merge_target_is_delta_closest(self, tiny_value, expected):
        units, signals = make_units([0.1, tiny_value, 0.9], [10_000, 50, 10_000])
        blocks = partition(units, signals, PartitionParams(alpha=0.01, tau=0.5))
        assert blocks == expected

    def test_zero_weights_single_block(self):
        units, signals = make_units(TWO_CLUSTERS)
        params = PartitionParams(alpha=0.01, weights=(0.0, 0.0, 0.0, 0.0))
        assert len(partition(units, signals, params)) == 1

    def test_single_unit(self):
        units, signals = make_units([0.4])
        assert partition(units, signals) == [[0]]

    def test_disjoint_ordered_cover(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            m = int(rng.integers(2, 15))
            values = rng.random(m).tolist()
            sizes = [int(rng.integers(10, 5000)) for _ in range(m)]
            units, signals = make_units(values, sizes)
            alpha = float(rng.uniform(0.01, 0.5))
            blocks = partition(units, signals, PartitionParams(alpha=alpha))
            flattened = [uid for block in blocks for uid in block]
            assert flattened == list(range(m))  # disjoint cover in original order

    def test_min_size_respected_or_single_block(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            m = int(rng.integers(2, 12))
            values = rng.random(m).tolist()
            sizes = [int(rng.integers(10, 5000)) for _ in range(m)]
            units, signals = make_units(values, sizes)
            total = sum(sizes)
            alpha = float(rng.uniform(0.02, 0.4))
            blocks = partition(units, signals, PartitionParams(alpha=alpha))
            if len(blocks) > 1:
                for block in blocks:
                    assert sum(sizes[uid] for uid in block) >= alpha * total

    def test_alpha_monotonicity(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            m = int(rng.integers(3, 12))
            values = rng.random(m).tolist()
            sizes = [int(rng.integers(50, 5000)) for _ in range(m)]
            units, signals = make_units(values, sizes)
            counts = [
                len(partition(units, signals, PartitionParams(alpha=alpha)))
                for alpha in (0.01, 0.05, 0.1, 0.2, 0.4)
            ]
            assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_duplicate_ids_rejected(self):
        u = StructuralUnit(id=0, name="a", shape=BlockShape((10,)))
        with pytest.raises(ValueError, match="unique"):
            partition([u, u], {0: sig(0.5)})

    def test_missing_signals_rejected(self):
        units, signals = make_units([0.5, 0.6])
        del signals[1]
        with pytest.raises(ValueError, match="no signals for unit 1"):
            partition(units, signals)


class TestParamsAndTau:
    def test_params_validation(self):
        with pytest.raises(ValueError):
            PartitionParams(alpha=0.0)
        with pytest.raises(ValueError):
            PartitionParams(alpha=1.0)
        with pytest.raises(ValueError):
            PartitionParams(tau="median")
        with pytest.raises(ValueError):
            PartitionParams(weights=(1, 1, -1, 1))

    def test_fixed_tau(self):
        units, signals = make_units([0.1, 0.9])
        assert compute_tau(units, signals, PartitionParams(tau=0.42)) == 0.42

    def test_upper_quartile_tau(self):
        units, signals = make_units(TWO_CLUSTERS)
        tau = compute_tau(units, signals, PartitionParams())
        deltas = sorted(
            abs(a - b) for i, a in enumerate(TWO_CLUSTERS) for b in TWO_CLUSTERS[i + 1 :]
        )
        assert tau == pytest.approx(float(np.quantile(deltas, 0.75)), abs=1e-12)


class TestModelDescription:
    def test_load_and_report(self, tmp_path):
        desc = {
            "units": [
                {"id": 0, "name": "l0.attn", "dims": [64, 64], "kind": "attention", "layer": 0},
                {"id": 1, "name": "l0.ffn", "dims": [64, 256], "kind": "ffn", "layer": 0},
            ]
        }
        path = tmp_path / "model.json"
        path.write_text(json.dumps(desc))
        units = load_model_description(path)
        assert [u.name for u in units] == ["l0.attn", "l0.ffn"]
        assert units[1].shape.param_count == 64 * 256

        doc = partition_to_json_dict(units, [[0, 1]], PartitionParams(), tau=0.5)
        assert doc["blocks"][0]["unit_ids"] == [0, 1]
        assert doc["blocks"][0]["param_count"] == 64 * 64 + 64 * 256
        assert doc["blocks"][0]["name"] == "l0.attn..l0.ffn"

    def test_bad_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"layers": []}))
        with pytest.raises(ValueError, match="units"):
            load_model_description(path)
