import json

import pytest

from ivregime.scm import LatentClass, OutcomeModel, ScmSpec, SpecError, Stratum, collect_violations, load_spec, validate_spec


def _one(latent, p_z=0.5):
    return ScmSpec((Stratum("l0", 1.0, p_z, tuple(latent)),))


def test_spec_t_is_valid_without_warnings(spec_t_):
    rep = validate_spec(spec_t_)
    assert rep.ok and rep.warnings == []


def test_latent_probabilities_must_sum_to_one():
    spec = _one([
        LatentClass("u0", 0.5, 0.7, 0.3, OutcomeModel.mean(1, 0)),
        LatentClass("u1", 0.6, 0.7, 0.3, OutcomeModel.mean(1, 0)),
    ])
    with pytest.raises(SpecError, match="latent probabilities sum to 1.1"):
        validate_spec(spec)


def test_no_relevance_is_a_warning_not_an_error():
    spec = _one([
        LatentClass("u0", 0.5, 0.4, 0.4, OutcomeModel.mean(1, 0)),
        LatentClass("u1", 0.5, 0.9, 0.9, OutcomeModel.mean(0, 1)),
    ])
    rep = validate_spec(spec)
    assert rep.ok
    assert len(rep.warnings) == 1
    assert "IV relevance fails: δ(l)=0" in rep.warnings[0]


@pytest.mark.parametrize("p_z", [0.0, 1.0, -0.1])
def test_iv_positivity_enforced(p_z):
    spec = _one([LatentClass("u0", 1.0, 0.7, 0.3, OutcomeModel.mean(1, 0))], p_z=p_z)
    with pytest.raises(SpecError, match="positivity"):
        validate_spec(spec)


def test_violations_name_the_offending_labels():
    spec = ScmSpec((
        Stratum("young", 0.5, 0.5, (LatentClass("frail", 1.0, 1.2, 0.3, OutcomeModel.bernoulli(0.5, 1.5)),)),
        Stratum("young", 0.4, 0.5, (LatentClass("x", 1.0, 0.5, 0.3, OutcomeModel.mean(1, 0)),)),
    ))
    rep = collect_violations(spec)
    text = " | ".join(rep.errors)
    assert "duplicate stratum labels ['young']" in text
    assert "stratum probabilities sum to 0.9" in text
    assert "class 'frail': p_a_z1=1.2" in text
    assert "bernoulli pm1" in text


def test_json_round_trip(spec_a_, spec_bin_):
    for spec in (spec_a_, spec_bin_):
        again = ScmSpec.from_json(spec.to_json())
        assert again == spec
        assert again.digest() == spec.digest()


def test_fixture_files_match_builders(data_dir, spec_a_, spec_b_, spec_t_, spec_bin_):
    assert load_spec(data_dir / "spec_a.json") == spec_a_
    assert load_spec(data_dir / "spec_b.json") == spec_b_
    assert load_spec(data_dir / "spec_t.json") == spec_t_
    assert load_spec(data_dir / "spec_bin.json") == spec_bin_


def test_unknown_keys_rejected(spec_a_):
    doc = spec_a_.to_dict()
    doc["strata"][0]["u"][0]["colour"] = "red"
    with pytest.raises(SpecError, match="unknown keys \\['colour'\\]"):
        ScmSpec.from_dict(doc)
    doc = spec_a_.to_dict()
    doc["strata"][0]["u"][0]["outcome"]["p1"] = 0.3
    with pytest.raises(SpecError, match="unknown keys"):
        ScmSpec.from_dict(doc)


def test_mean_noise_defaults(spec_a_):
    doc = spec_a_.to_dict()
    del doc["strata"][0]["u"][0]["outcome"]["noise_sd"]
    spec = ScmSpec.from_dict(doc)
    assert spec.strata[0].latent[0].outcome.noise_sd == 0.5


def test_bad_documents():
    with pytest.raises(SpecError, match="invalid JSON"):
        ScmSpec.from_json("{")
    with pytest.raises(SpecError, match="non-empty"):
        ScmSpec.from_dict({"strata": []})
    with pytest.raises(SpecError, match="expected a number"):
        ScmSpec.from_json(json.dumps({"strata": [{"label": "a", "prob": "1", "p_z": 0.5, "u": [
            {"label": "u", "prob": 1, "p_a_z1": 0.5, "p_a_zm1": 0.2, "outcome": {"mode": "mean", "m1": 0, "mm1": 1}}]}]}))
    with pytest.raises(SpecError, match="mode"):
        ScmSpec.from_dict({"strata": [{"label": "a", "prob": 1, "p_z": 0.5, "u": [
            {"label": "u", "prob": 1, "p_a_z1": 0.5, "p_a_zm1": 0.2, "outcome": {"mode": "poisson"}}]}]})
