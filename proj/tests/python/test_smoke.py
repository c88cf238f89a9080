import json
import math

import numpy as np
import pytest

import ensembles as ens


def srw_tilt(lam=0.5):
    return ens.TiltSpec(1.0, 2.0, ens.Potential.linear(lam))


def test_version():
    assert ens.__version__ == "0.1.0"


def test_kernel_and_scale():
    k = ens.Kernel.lazy_walk()
    assert k.period == 1
    assert math.isclose(k.sigma, math.sqrt(0.5))
    h_big, h_small = ens.h_scale(ens.Potential.linear(0.125))
    assert math.isclose(h_big, 2.0)
    assert math.isclose(h_small, 0.5)


def test_validation_errors_raise():
    with pytest.raises(ens.EnsemblesError) as info:
        ens.TiltSpec(1.0, 1.0, ens.Potential.linear(0.5))
    assert info.value.code == "InvalidArgument"
    with pytest.raises(ValueError):
        ens.Kernel([1, 3], [0.5, 0.5])


def test_exact_marginals_and_samples_agree():
    tilt = srw_tilt()
    spec = ens.EnsembleSpec(1, 0, 4, [2], tilt=tilt)
    engine = ens.ExactEngine(spec, ens.Kernel.simple_walk(), tilt)
    pmf = engine.marginal(2)
    assert pmf.shape == (1, spec.x_max + 1)
    assert math.isclose(pmf.sum(), 1.0)
    samples = engine.sample(3, 20000, threads=2)
    assert samples.shape == (20000, 1, 5)
    assert (samples[:, 0, 0] == 2).all()
    empirical = np.bincount(samples[:, 0, 2], minlength=pmf.shape[1]) / 20000
    assert 0.5 * np.abs(empirical - pmf[0]).sum() < 0.02
    again = engine.sample(3, 20000, threads=1)
    assert (again == samples).all()


def test_mcmc_keeps_order_and_boundary():
    tilt = srw_tilt(0.3)
    spec = ens.EnsembleSpec(2, -6, 6, [3, 1], v=[3, 1], tilt=tilt)
    params = ens.McmcParams()
    params.sweeps = 200
    params.burn_in = 20
    params.seed = 4
    paths, diag = ens.sample_paths(spec, ens.Kernel.simple_walk(), tilt, params)
    assert paths.shape[1:] == (2, 13)
    assert diag["samples"] == paths.shape[0]
    assert (paths[:, 0, :] > paths[:, 1, :]).all()
    assert (paths[:, 1, :] > 0).all()
    assert (paths[:, :, 0] == [3, 1]).all() and (paths[:, :, -1] == [3, 1]).all()


def test_mixing_curve_decreases():
    r = ens.mixing_curve(ens.Kernel.simple_walk(), srw_tilt(), 1, [1, 2, 3, 4], [1], [3])
    assert r["strictly_decreasing"]
    assert all(a > b for a, b in zip(r["tv"], r["tv"][1:]))
    assert r["c2"] > 0


def test_oracle_laws():
    zero = ens.polymer_marginal(1, 1.0, 2.0, 0.1, cap=12.0, kind="zero")
    assert math.isclose(zero.sum(), 1.0)
    assert zero[0, 0] == 0.0
    density, eig = ens.stationary_density(1, 1.0, 2.0, 0.1, cap=12.0)
    assert 0.0 < eig < 1.0
    assert math.isclose(density.sum(), 1.0)


def test_run_experiment_envelope(tmp_path):
    text = "kernel.offsets = -1,1\nkernel.probs = 0.5,0.5\nmodel.lambda = 0.5\nmixing.k = 1,2,3\n"
    out = ens.run_experiment(text, "mixing", str(tmp_path))
    assert out["exit_code"] == 0
    env = json.loads(out["results_json"])
    assert env["verdict"] == "PASS"
    assert env["config_hash"] == ens.content_hash(ens.canonical_config("experiment = mixing\n" + text))
    lines = out["csv"]["mixing"].splitlines()
    assert lines[0] == "K,tv,log_tv"
    assert len(lines) == 4
    assert (tmp_path / "mixing.csv").read_text() == out["csv"]["mixing"]


def test_unknown_key_named():
    with pytest.raises(ens.EnsemblesError, match="kernel.varianse"):
        ens.run_experiment("kernel.varianse = 1\n", "exact")
