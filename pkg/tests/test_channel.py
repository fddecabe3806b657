"""Steering vectors, path loss, synthesis determinism, composite assembly."""

import numpy as np
import pytest

from conftest import complex_normal, random_channels, random_state
from rdars_isac.channel import (
    assemble_composites,
    dump_channels,
    initial_rdars_state,
    load_channels,
    path_loss_gain,
    steering_vector,
    synthesize_channels,
)
from rdars_isac.scenario import default_config, derive_geometry, desk_config
from dataclasses import replace


def test_steering_ula_trivial():
    assert np.allclose(steering_vector("ULA", 0.0, dims=4), np.ones(4))
    v = steering_vector("ULA", np.pi / 2, dims=2, spacing_ratio=0.5)
    assert np.allclose(v, [1.0, -1.0], atol=1e-12)


def test_steering_upa_trivial():
    v = steering_vector("UPA", 0.0, 0.0, dims=(3, 4))
    assert np.allclose(v, np.ones(12))


def test_steering_unit_magnitude(rng):
    for _ in range(20):
        theta, psi = rng.uniform(-np.pi / 2, np.pi / 2, size=2)
        ula = steering_vector("ULA", theta, dims=7)
        upa = steering_vector("UPA", theta, psi, dims=(3, 5))
        assert np.max(np.abs(np.abs(ula) - 1.0)) <= 1e-12
        assert np.max(np.abs(np.abs(upa) - 1.0)) <= 1e-12


def test_steering_rejects_bad_input():
    with pytest.raises(ValueError):
        steering_vector("ULA", np.nan, dims=4)
    with pytest.raises(ValueError):
        steering_vector("ULA", 0.0, dims=0)


def test_path_loss_values():
    assert path_loss_gain(1.0, 2.0) == pytest.approx(1e-3, rel=1e-12)
    assert 10 * np.log10(path_loss_gain(10.0, 2.0)) == pytest.approx(-50.0, abs=1e-9)
    # evaluated independently: -30 - 24*log10(15)
    assert 10 * np.log10(path_loss_gain(15.0, 2.4)) == pytest.approx(-58.2267, abs=1e-3)
    with pytest.raises(ValueError):
        path_loss_gain(0.0, 2.0)


def test_synthesis_deterministic():
    cfg = desk_config()
    geom = derive_geometry(cfg)
    a = synthesize_channels(cfg, geom, 11)
    b = synthesize_channels(cfg, geom, 11)
    assert np.array_equal(a.h_br, b.h_br)
    assert np.array_equal(a.h_bu, b.h_bu)
    assert np.array_equal(a.h_ru, b.h_ru)
    assert np.array_equal(a.user_positions, b.user_positions)
    c = synthesize_channels(cfg, geom, 12)
    assert not np.array_equal(a.h_br, c.h_br)


def test_pure_los_at_kappa_one():
    cfg = replace(desk_config(), kappa=1.0).validate()
    geom = derive_geometry(cfg)
    ch = synthesize_channels(cfg, geom, 5)
    los = np.outer(
        steering_vector("UPA", geom.theta_br_arr, geom.psi_br_arr, (cfg.n1, cfg.n2)),
        steering_vector("ULA", geom.theta_br_dep, dims=cfg.m),
    )
    expected = np.sqrt(ch.gains["h_br"]) * los
    assert np.max(np.abs(ch.h_br - expected)) <= 1e-12
    # target links are always pure LoS
    ch2 = synthesize_channels(replace(cfg, kappa=0.0).validate(), geom, 5)
    assert np.array_equal(ch.h_bt, ch2.h_bt)
    assert np.array_equal(ch.h_rt, ch2.h_rt)


def test_rayleigh_variance_at_kappa_zero():
    cfg = replace(desk_config(), n=120, n1=12, n2=10, m=100, kappa=0.0).validate()
    geom = derive_geometry(cfg)
    ch = synthesize_channels(cfg, geom, 77)
    entries = ch.h_br.ravel() / np.sqrt(ch.gains["h_br"])
    assert entries.size >= 10_000
    var = np.mean(np.abs(entries) ** 2)
    assert abs(var - 1.0) <= 0.05


def test_users_inside_disk():
    cfg = desk_config()
    geom = derive_geometry(cfg)
    ch = synthesize_channels(cfg, geom, 9)
    delta = ch.user_positions - geom.user_center[None, :]
    assert np.all(np.linalg.norm(delta[:, :2], axis=1) <= geom.user_radius + 1e-12)
    assert np.all(ch.user_positions[:, 2] == geom.user_center[2])


def test_composites_all_connected(rng):
    m, n, k = 3, 4, 2
    ch = random_channels(rng, m, n, k)
    state = initial_rdars_state(n, n)
    state.phi = np.exp(1j * rng.uniform(0, 2 * np.pi, n))
    comps = assemble_composites(ch, state)
    # reflection path vanishes when every element is connected
    assert np.allclose(comps.h4, ch.h_bt, atol=1e-14)
    assert np.allclose(comps.h1[:, :m], ch.h_bu, atol=1e-14)
    assert np.max(np.abs(comps.h3)) == 0.0


def test_composites_passive_reduction(rng):
    m, n, k = 3, 4, 2
    ch = random_channels(rng, m, n, k)
    state = initial_rdars_state(n, 0)
    state.phi = np.exp(1j * rng.uniform(0, 2 * np.pi, n))
    comps = assemble_composites(ch, state)
    assert comps.h1.shape == (k, m)
    expected = ch.h_bu + (ch.h_ru * state.phi[None, :]) @ ch.h_br
    assert np.max(np.abs(comps.h1 - expected)) <= 1e-12


def test_echo_channel_rank_one(rng):
    m, n, k, a = 3, 4, 2, 1
    ch = random_channels(rng, m, n, k)
    state = random_state(rng, n, a)
    comps = assemble_composites(ch, state)
    v = np.concatenate([comps.h4, state.a_cols.T @ ch.h_rt])
    assert np.max(np.abs(comps.h2 - np.outer(comps.h4, v))) <= 1e-12
    svals = np.linalg.svd(comps.h2, compute_uv=False)
    assert svals[1] <= 1e-10 * svals[0]


def test_composite_matches_termwise_evaluation(rng):
    for _ in range(10):
        m, n, k, a = 3, 5, 2, 2
        ch = random_channels(rng, m, n, k)
        state = random_state(rng, n, a, aligned=bool(rng.integers(2)))
        comps = assemble_composites(ch, state)
        a_mat = np.diag(state.a_vec.astype(float))
        phi_mat = np.diag(state.phi)
        eye = np.eye(n)
        for kk in range(k):
            first = ch.h_bu[kk] + ch.h_ru[kk] @ (eye - a_mat) @ phi_mat @ ch.h_br
            second = ch.h_ru[kk] @ state.a_cols.astype(float)
            expected = np.concatenate([first, second])
            assert np.max(np.abs(comps.h1[kk] - expected)) <= 1e-12
        h4 = ch.h_bt + ch.h_br.T @ (eye - a_mat) @ phi_mat @ ch.h_rt
        row = np.concatenate([h4, ch.h_rt @ state.a_cols.astype(float)])
        assert np.max(np.abs(comps.h2 - np.outer(h4, row))) <= 1e-12


def test_dimension_mismatch_rejected(rng):
    ch = random_channels(rng, 3, 4, 2)
    state = random_state(rng, 5, 2)
    with pytest.raises(ValueError):
        assemble_composites(ch, state)


def test_dump_load_round_trip(tmp_path, rng):
    cfg = desk_config()
    geom = derive_geometry(cfg)
    ch = synthesize_channels(cfg, geom, 3)
    path = tmp_path / "channels.txt"
    dump_channels(ch, path)
    back = load_channels(path)
    assert np.array_equal(back.h_br, ch.h_br)
    assert np.array_equal(back.h_bu, ch.h_bu)
    assert np.array_equal(back.h_ru, ch.h_ru)
    assert np.array_equal(back.h_bt, ch.h_bt)
    assert np.array_equal(back.h_rt, ch.h_rt)
    assert np.array_equal(back.user_positions, ch.user_positions)
    assert back.gains["h_br"] == ch.gains["h_br"]
    assert np.array_equal(back.gains["h_bu"], ch.gains["h_bu"])


def test_rdars_state_validation():
    state = initial_rdars_state(5, 2)
    state.validate()
    state.phi = 0.5 * state.phi
    with pytest.raises(ValueError, match="unit modulus"):
        state.validate()
    state = initial_rdars_state(5, 2)
    state.a_cols[:, 1] = state.a_cols[:, 0]
    with pytest.raises(ValueError, match="distinct"):
        state.validate()
