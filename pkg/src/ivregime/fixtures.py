"""Reference models used as regression fixtures and in the docs."""

from __future__ import annotations

from .scm import LatentClass, OutcomeModel, ScmSpec, Stratum


def _one_stratum(latent, p_z=0.5, label="l0"):
    return ScmSpec((Stratum(label, 1.0, p_z, tuple(latent)),))


def spec_t() -> ScmSpec:
    """No effect heterogeneity: gamma-tilde = 0.5 and delta-tilde = 0.4 everywhere."""
    return _one_stratum([LatentClass("u0", 1.0, 0.7, 0.3, OutcomeModel.mean(0.9, 0.4))])


def spec_a() -> ScmSpec:
    """Theorem-1 condition holds while Han's and Cui's conditions both fail."""
    return _one_stratum([
        LatentClass("u0", 0.5, 0.7, 0.3, OutcomeModel.mean(1.0, 0.0)),
        LatentClass("u1", 0.5, 0.3, 0.5, OutcomeModel.mean(0.0, 0.5)),
    ])


def spec_b() -> ScmSpec:
    """SPEC-A with compliance rows swapped: the Wald sign is wrong."""
    return _one_stratum([
        LatentClass("u0", 0.5, 0.3, 0.5, OutcomeModel.mean(1.0, 0.0)),
        LatentClass("u1", 0.5, 0.7, 0.3, OutcomeModel.mean(0.0, 0.5)),
    ])


def spec_bin() -> ScmSpec:
    """Perfect compliance with a binary outcome."""
    return _one_stratum([LatentClass("u0", 1.0, 1.0, 0.0, OutcomeModel.bernoulli(0.8, 0.3))])


FIXTURES = {"SPEC-T": spec_t, "SPEC-A": spec_a, "SPEC-B": spec_b, "SPEC-BIN": spec_bin}
