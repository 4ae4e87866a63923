import numpy as np
import pytest

from bbattack.config import (
    build_criterion,
    build_oracle,
    build_surrogate,
    generate_instances,
    parse_config,
)
from bbattack.errors import ConfigError
from bbattack.oracles import ExactTarget, SubstringMatch


def minimal_config(**overrides):
    doc = {
        "oracle": {"kind": "linear", "shape": [8, 8, 1], "margin": 0.5},
        "criterion": {"kind": "exact-target", "target": "pos"},
        "bias_grid": [{}, {"perlin": True}],
        "budget": 100,
        "threshold": "auto",
        "checkpoints": [50, 100],
        "seeds": [0, 1],
        "images": {"kind": "synthetic", "count": 2, "image_seed": 5,
                   "pool": {"mode": "oracle-direction",
                            "candidates": [{"along": 2.0, "lateral": 1.0}]}},
        "output_dir": "out",
    }
    doc.update(overrides)
    return doc


class TestStrictParsing:
    def test_minimal_config_parses(self):
        config = parse_config(minimal_config())
        assert config.budget == 100
        assert config.threshold == pytest.approx(0.05 * 8)
        assert config.threshold_rule == "0.05*sqrt(k)"

    def test_unknown_top_level_key_fatal(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(minimal_config(extra_knob=1))

    def test_unknown_bias_key_fatal(self):
        with pytest.raises(ConfigError, match="bias_grid"):
            parse_config(minimal_config(bias_grid=[{"perlinn": True}]))

    def test_unknown_oracle_key_fatal(self):
        doc = minimal_config()
        doc["oracle"]["blur"] = 3
        with pytest.raises(ConfigError):
            parse_config(doc)

    def test_missing_required_key(self):
        doc = minimal_config()
        del doc["budget"]
        with pytest.raises(ConfigError, match="budget"):
            parse_config(doc)

    def test_checkpoints_must_increase(self):
        with pytest.raises(ConfigError):
            parse_config(minimal_config(checkpoints=[50, 50]))

    def test_checkpoints_within_budget(self):
        with pytest.raises(ConfigError):
            parse_config(minimal_config(checkpoints=[50, 200]))

    def test_gradient_grid_requires_surrogate(self):
        with pytest.raises(ConfigError, match="surrogate"):
            parse_config(minimal_config(bias_grid=[{"gradient": True}]))

    def test_gradient_grid_with_surrogate(self):
        config = parse_config(minimal_config(bias_grid=[{"gradient": True}],
                                             surrogate={"kind": "from-oracle"}))
        assert config.surrogate_spec == {"kind": "from-oracle"}

    def test_explicit_threshold(self):
        config = parse_config(minimal_config(threshold=2.5))
        assert config.threshold == 2.5 and config.threshold_rule == "explicit"

    def test_step_mode_validated(self):
        with pytest.raises(ConfigError):
            parse_config(minimal_config(step_mode="both"))


class TestOracleBuilder:
    def test_margin_sets_gray_distance(self):
        oracle = build_oracle({"kind": "linear", "shape": [8, 8, 1], "margin": 0.7})
        gray = np.full((8, 8, 1), 0.5)
        assert oracle.boundary_distance(gray) == pytest.approx(0.7)
        assert oracle.predict(gray).top1 == "neg"

    def test_composed_margin_uses_effective_form(self):
        spec = {"kind": "lowpass", "radius": 2, "margin": 0.7,
                "inner": {"kind": "region", "region": [2, 2, 4, 4],
                          "inner": {"kind": "linear", "shape": [8, 8, 1]}}}
        oracle = build_oracle(spec)
        w_eff, b = oracle.effective_linear()
        gray = np.full((8, 8, 1), 0.5)
        signed = (float(np.dot(w_eff.ravel(), gray.ravel())) + b) / np.linalg.norm(w_eff)
        assert signed == pytest.approx(-0.7)

    def test_nested_unknown_key(self):
        with pytest.raises(ConfigError):
            build_oracle({"kind": "lowpass", "inner": {"kind": "linear", "shape": [4, 4, 1],
                                                       "oops": 1}})

    def test_fixed_oracle(self):
        oracle = build_oracle({"kind": "fixed", "shape": [4, 4, 1], "labels": ["a", "b"]})
        assert oracle.predict(np.zeros((4, 4, 1))).names() == ("a", "b")

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            build_oracle({"kind": "quadratic", "shape": [4, 4, 1]})

    def test_weight_file(self, tmp_path):
        weights = np.random.default_rng(0).standard_normal((4, 4, 1))
        path = tmp_path / "w.npy"
        np.save(path, weights)
        oracle = build_oracle({"kind": "linear", "shape": [4, 4, 1],
                               "weights": {"path": str(path)}, "offset": 0.25})
        assert np.array_equal(oracle.weights, weights)
        assert oracle.offset == 0.25


class TestCriterionBuilder:
    def test_all_kinds(self):
        assert isinstance(build_criterion({"kind": "exact-target", "target": "x"}), ExactTarget)
        crit = build_criterion({"kind": "substring-match", "required": "bear",
                                "forbidden": ["person"]})
        assert isinstance(crit, SubstringMatch)
        compound = build_criterion({"kind": "compound", "op": "or", "children": [
            {"kind": "exact-target", "target": "a"},
            {"kind": "label-in-set", "allowed": ["b"]}]})
        assert len(compound.children) == 2

    def test_bad_compound_op(self):
        with pytest.raises(ConfigError):
            build_criterion({"kind": "compound", "op": "nand",
                             "children": [{"kind": "exact-target", "target": "a"}]})


class TestSurrogateBuilder:
    def test_from_oracle_mirrors_decision(self):
        oracle = build_oracle({"kind": "lowpass", "radius": 1, "margin": 0.5,
                               "inner": {"kind": "linear", "shape": [8, 8, 1]}})
        setup = build_surrogate({"kind": "from-oracle"}, oracle)
        w_eff, b = oracle.effective_linear()
        x = np.random.default_rng(1).random((8, 8, 1))
        logits = setup.model.logits(x)
        assert logits[1] - logits[0] == pytest.approx(float(np.dot(w_eff.ravel(), x.ravel())) + b)
        assert setup.target_class == 1

    def test_from_oracle_with_noise_changes_weights(self):
        oracle = build_oracle({"kind": "linear", "shape": [8, 8, 1], "margin": 0.5})
        clean = build_surrogate({"kind": "from-oracle"}, oracle)
        noisy = build_surrogate({"kind": "from-oracle", "weight_noise": 1.0, "noise_seed": 3},
                                oracle)
        assert not np.array_equal(clean.model.weights, noisy.model.weights)

    def test_file_surrogate(self, tmp_path):
        from bbattack.surrogate import LinearSurrogate, save_surrogate
        from bbattack.tensor_core import ImageShape

        shape = ImageShape(4, 4, 1)
        rng = np.random.default_rng(2)
        model = LinearSurrogate(rng.standard_normal((2, 16)), rng.standard_normal(2), shape)
        path = tmp_path / "s.json"
        save_surrogate(model, path)
        setup = build_surrogate({"kind": "file", "path": str(path), "target_class": 1}, None)
        assert np.array_equal(setup.model.weights, model.weights)


class TestInstances:
    def test_synthetic_deterministic(self):
        oracle = build_oracle({"kind": "linear", "shape": [8, 8, 1], "margin": 0.5})
        spec = {"kind": "synthetic", "count": 3, "image_seed": 9,
                "pool": {"mode": "oracle-direction",
                         "candidates": [{"along": 2.0, "lateral": 1.0}]}}
        a = generate_instances(spec, oracle)
        b = generate_instances(spec, oracle)
        assert len(a) == 3
        for inst_a, inst_b in zip(a, b):
            assert np.array_equal(inst_a.x_orig, inst_b.x_orig)
            assert all(np.array_equal(p, q) for p, q in zip(inst_a.pool, inst_b.pool))

    def test_pool_crosses_boundary(self):
        oracle = build_oracle({"kind": "linear", "shape": [8, 8, 1], "margin": 0.3})
        spec = {"kind": "synthetic", "count": 2, "image_seed": 9, "base": "gray",
                "pool": {"mode": "oracle-direction",
                         "candidates": [{"along": 2.0, "lateral": 0.5}]}}
        for inst in generate_instances(spec, oracle):
            assert oracle.predict(inst.x_orig).top1 == "neg"
            assert oracle.predict(inst.pool[0]).top1 == "pos"

    def test_hold_region_pins_margin(self):
        oracle = build_oracle({"kind": "region", "region": [2, 2, 4, 4], "margin": 0.4,
                               "inner": {"kind": "linear", "shape": [8, 8, 1]}})
        spec = {"kind": "synthetic", "count": 4, "image_seed": 1, "hold_region": [2, 2, 4, 4],
                "base_amplitude": 0.2,
                "pool": {"mode": "oracle-direction",
                         "candidates": [{"along": 2.0, "lateral": 1.0}]}}
        w_eff, b = oracle.effective_linear()
        wn = np.linalg.norm(w_eff)
        margins = []
        for inst in generate_instances(spec, oracle):
            margins.append(abs(float(np.dot(w_eff.ravel(), inst.x_orig.ravel())) + b) / wn)
        assert np.ptp(margins) <= 1e-9
        # images still differ outside the held region
        insts = generate_instances(spec, oracle)
        assert np.abs(insts[0].x_orig - insts[1].x_orig).max() > 1e-3

    def test_directory_source(self, tmp_path):
        originals = tmp_path / "orig"
        pool = tmp_path / "pool"
        originals.mkdir()
        pool.mkdir()
        rng = np.random.default_rng(0)
        for i in range(2):
            np.save(originals / f"img{i}.npy", rng.random((4, 4, 1)))
        np.save(pool / "start.npy", rng.random((4, 4, 1)))
        oracle = build_oracle({"kind": "linear", "shape": [4, 4, 1]})
        instances = generate_instances({"kind": "directory", "originals": str(originals),
                                        "pool": str(pool)}, oracle)
        assert len(instances) == 2
        assert len(instances[0].pool) == 1
