import json
from dataclasses import replace
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from referencing import Registry, Resource

from attackgen import datasets, models
from attackgen import measures as M
from attackgen import optimizers as opt
from attackgen import taxonomy as tx
from attackgen.errors import ShapeError, ValidationError

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = json.loads((Path(__file__).parent / "golden" / "presets.json").read_text())


def schema_validator(name):
    registry = Registry()
    for p in (ROOT / "docs").glob("*.schema.json"):
        s = json.loads(p.read_text())
        registry = registry.with_resource(s["$id"], Resource.from_contents(s))
    schema = json.loads((ROOT / "docs" / name).read_text())
    return jsonschema.Draft202012Validator(schema, registry=registry)


def retag(spec, **tags):
    d = spec.tags.to_dict()
    d.update(tags)
    return replace(spec, tags=tx.TaxonomyTags.from_dict(d))


def test_every_preset_validates():
    assert set(tx.PRESET_NAMES) == set(GOLDEN)
    for name in tx.PRESET_NAMES:
        assert tx.validate(tx.preset(name)) == [], name


@pytest.mark.parametrize("name", sorted(GOLDEN))
def test_preset_decomposition_golden(name):
    assert tx.preset(name).decomposition() == GOLDEN[name]


def test_assembled_components_match_golden(zoo):
    arch_for = {"fgsm": "cnn-classifier", "lbfgs": "cnn-classifier", "pgd": "cnn-classifier",
                "boundary": "cnn-classifier", "eot": "cnn-classifier"}
    for name in tx.PRESET_NAMES:
        model, data = zoo[arch_for.get(name, "conv-segmenter")]
        r = tx.assemble(tx.preset(name, data=data), model=model)
        want = GOLDEN[name]
        got = r.components
        assert got["specificity"] == want["specificity"]
        assert got["scope"] == want["scope"]
        assert got["imperceptibility"] == want["imperceptibility"]
        assert got["form"] == want["form"]
        assert got["representation"] == want["representation"]
        if r.objective is not None and want["scope"] == "Contextual":
            assert isinstance(r.objective.scope.transforms, M.AffineJitter)


def test_first_order_with_label_only_is_rejected():
    v = tx.validate(retag(tx.preset("pgd"), model_knowledge="LabelOnly"))
    assert any("LabelOnly" in s for s in v) and any("WhiteBox" in s for s in v)


def test_boundary_composition_is_ok_and_gradients_are_not():
    assert tx.validate(tx.preset("boundary")) == []
    assert tx.validate(retag(tx.preset("boundary"), opt_method="FirstOrder"))


def test_universal_scope_needs_many_items():
    v = tx.validate(tx.preset("metzen-dynamic", data="shapes:n=1"))
    assert any("multi-item" in s for s in v)


def test_output_and_detector_not_implemented():
    for kind in ("OutputImperceptibility", "DetectorImperceptibility"):
        v = tx.validate(retag(tx.preset("pgd"), imperceptibility=kind))
        assert any("not implemented" in s for s in v)
    spec = replace(tx.preset("pgd"), imperceptibility={"variant": "Output"})
    assert any("not implemented" in s for s in tx.validate(spec))


def test_physical_feed_is_not_an_option():
    assert [e.value for e in tx.InputConstraint] == ["DigitalFeed", "SpatialConstraint"]


def test_knowledge_and_basis_rules():
    spec = retag(tx.preset("pgd"), model_knowledge="FullBlackBox")
    assert any("SurrogateModel" in s for s in tx.validate(spec))
    assert tx.validate(retag(spec, model_basis="SurrogateModel")) == []
    spec = retag(tx.preset("boundary"), model_knowledge="QueryLimited")
    assert any("max_queries" in s for s in tx.validate(spec))
    assert tx.validate(replace(spec, max_queries=500)) == []


def test_representation_and_form_rules():
    v = tx.validate(retag(tx.preset("pgd"), imperceptibility="AttentionBased"))
    assert any("flow-field" in s for s in v)
    v = tx.validate(replace(tx.preset("flow-dynamic"), form={"variant": "Constraint", "epsilon": 1.0}))
    assert any("Penalty form" in s for s in v)
    v = tx.validate(replace(tx.preset("fgsm"), imperceptibility={"variant": "Lp", "p": 2}))
    assert any("FGSM" in s for s in v)
    v = tx.validate(replace(tx.preset("lbfgs"), form={"variant": "Penalty", "gamma": 0.0}))
    assert any("gamma > 0" in s for s in v)
    v = tx.validate(replace(tx.preset("pgd"), form={"variant": "Decision"}))
    assert any("Decision" in s for s in v)


def test_spatial_constraint_and_mask_go_together():
    spec = retag(tx.preset("pgd"), input_constraint="SpatialConstraint")
    assert any("mask" in s for s in tx.validate(spec))
    masked = replace(spec, admissible={"box": [0, 1], "mask": {"rows": [0, 4], "cols": [0, 4]}})
    assert tx.validate(masked) == []
    assert tx.validate(replace(tx.preset("pgd"), admissible=masked.admissible))


def test_json_roundtrip_and_unknown_keys(tmp_path):
    for name in tx.PRESET_NAMES:
        spec = tx.preset(name)
        assert tx.AttackSpec.from_json(spec.to_json()) == spec
    tx.save_spec(tx.preset("eot"), tmp_path / "s.json")
    assert tx.load_spec(tmp_path / "s.json") == tx.preset("eot")
    d = tx.preset("pgd").to_dict()
    for where, patch in [("spec", {"colour": 1}), ("optimizer", {"momentum": 0.9}), ("tags", {"extra": "x"})]:
        bad = json.loads(json.dumps(d))
        (bad if where == "spec" else bad[where]).update(patch)
        with pytest.raises(ValidationError):
            tx.AttackSpec.from_dict(bad)
    bad = json.loads(json.dumps(d))
    bad["tags"]["scope"] = "Galactic"
    with pytest.raises(ValidationError):
        tx.AttackSpec.from_dict(bad)


def test_overrides():
    s = tx.preset("pgd").with_overrides(epsilon=0.2, seed=9)
    assert s.form["epsilon"] == 0.2 and s.seed == 9
    with pytest.raises(ValidationError):
        tx.preset("pgd").with_overrides(gamma=1.0)
    with pytest.raises(KeyError):
        tx.preset("nope")


def test_specs_match_schema():
    val = schema_validator("spec.schema.json")
    for name in tx.PRESET_NAMES:
        val.validate(tx.preset(name).to_dict())
    d = tx.preset("pgd").to_dict()
    d["optimizer"]["momentum"] = 0.9
    with pytest.raises(jsonschema.ValidationError):
        val.validate(d)


def test_assemble_rejects_bad_shapes_and_invalid_specs(mlp_model, cnn_model):
    with pytest.raises(ShapeError):
        tx.assemble(tx.preset("pgd"), model=mlp_model)
    with pytest.raises(ValidationError):
        tx.assemble(retag(tx.preset("pgd"), model_knowledge="LabelOnly"), model=cnn_model)


def test_result_carries_tags_and_reassembly_is_deterministic(cnn_model):
    spec = tx.preset("pgd", seed=4)
    a = tx.assemble(spec, model=cnn_model).run()
    b = tx.assemble(spec, model=cnn_model).run()
    assert a.tags == spec.tags.to_dict()
    assert np.array_equal(a.perturbation, b.perturbation) and a.trace == b.trace


def test_surrogate_basis_assembles_white_box(cnn_model):
    spec = retag(tx.preset("fgsm"), model_knowledge="FullBlackBox", model_basis="SurrogateModel")
    r = tx.assemble(spec, model=cnn_model)
    assert r.handle.access is models.Access.WHITE_BOX


def test_boundary_preset_runs_label_only(cnn_model):
    spec = replace(tx.preset("boundary"), optimizer={"variant": "Boundary", "iters": 30})
    r = tx.assemble(spec, model=cnn_model)
    assert r.handle.access is models.Access.LABEL_ONLY
    res = r.run()
    assert res.queries == r.handle.query_count > 0
    assert cnn_model.predict_labels((r.x + res.perturbation)[None])[0] != r.y


# transfer


def _small_universal(seg_model, scenes):
    spec = replace(tx.preset("metzen-dynamic"), scope={"variant": "MonteCarlo", "limit": 8},
                   optimizer={"variant": "Universal", "alpha": 1 / 255, "steps": 1, "step_rule": "sign",
                              "epochs": 5, "batch_size": 8})
    return tx.assemble(spec, model=seg_model, dataset=scenes)


def test_self_transfer_reproduces_result(seg_model, scenes_attack):
    r = _small_universal(seg_model, scenes_attack)
    res = r.run()
    rep = tx.transfer_evaluate(res, seg_model, scenes_attack.subset(range(8)))
    assert rep["transfer_success_rate"] == pytest.approx(res.success_rate, abs=1e-12)
    assert rep["per_item_success"] == pytest.approx(res.per_item_success, abs=1e-12)
    assert sum(rep["target_pixels_after"]) < sum(rep["target_pixels_before"])


def test_zero_perturbation_success_is_clean_error(cnn_model, patterns):
    rep = tx.transfer_evaluate(np.zeros(cnn_model.input_shape), cnn_model, patterns)
    assert rep["transfer_success_rate"] == rep["clean_error_rate"] == rep["adversarial_error_rate"]


def test_transfer_shape_mismatch(cnn_model, blobs):
    with pytest.raises(ShapeError):
        tx.transfer_evaluate(np.zeros(2), cnn_model, blobs)


def test_mlp_universal_transfers_across_seeds(mlp_model, blobs):
    spec = tx.AttackSpec(
        name="mlp-universal",
        tags=tx.TaxonomyTags.from_dict({
            "specificity": "Untargeted", "scope": "Universal", "imperceptibility": "LpBased",
            "model_knowledge": "FullBlackBox", "data_knowledge": "SurrogateData", "input_constraint": "DigitalFeed",
            "model_basis": "SurrogateModel", "data_basis": "SurrogateData", "opt_method": "FirstOrder"}),
        specificity={"variant": "Untargeted"},
        imperceptibility={"variant": "Lp", "p": "inf"},
        scope={"variant": "MonteCarlo"},
        form={"variant": "Constraint", "epsilon": 1.5},
        admissible={"box": None},
        optimizer={"variant": "Universal", "alpha": 0.05, "steps": 1, "step_rule": "sign", "epochs": 10},
        data="blobs:n=200", seed=0)
    assert tx.validate(spec) == []
    res = tx.assemble(spec, model=mlp_model, dataset=blobs).run()
    # same data distribution, independent init seed; held-out points from the same blobs
    victim = models.train("mlp", blobs, 50, seed=11)
    heldout = datasets.gen_blobs(400, 2, 2, seed=0).subset(range(200, 400))
    rep = tx.transfer_evaluate(res, victim, heldout, box=None)
    assert rep["clean_error_rate"] == 0.0
    assert rep["transfer_success_rate"] > 0
