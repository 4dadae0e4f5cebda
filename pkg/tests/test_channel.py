import numpy as np
import pytest

from gbcd.channel import (dump_matrix, estimate_channel, gen_channel,
                          load_matrix, noise_variance_for_snr, transmit)
from gbcd.detector import gram


def test_seeded_determinism(qam16):
    a = gen_channel(8, 4, "nonlos", np.random.default_rng(3)).H
    b = gen_channel(8, 4, "nonlos", np.random.default_rng(3)).H
    assert a.tobytes() == b.tobytes()
    ba = transmit(a, qam16, 5, 12.0, np.random.default_rng(9))
    bb = transmit(a, qam16, 5, 12.0, np.random.default_rng(9))
    assert ba.Y.tobytes() == bb.Y.tobytes()
    assert ba.S.tobytes() == bb.S.tobytes()


@pytest.mark.parametrize("condition", ["nonlos", "los"])
def test_power_control_band(condition, rng):
    for _ in range(20):
        ch = gen_channel(32, 8, condition, rng)
        p = np.sum(np.abs(ch.H) ** 2, axis=0)
        assert p.max() / p.min() <= 10 ** 0.6 + 1e-9
        assert np.all(np.isfinite(ch.H))
        assert np.all(p > 0)


def test_invalid_dimensions(rng):
    with pytest.raises(ValueError):
        gen_channel(4, 8, "nonlos", rng)
    with pytest.raises(ValueError):
        gen_channel(8, 1, "nonlos", rng)


def test_los_colinear_users_rank_one(rng):
    angles = np.deg2rad(np.array([17.0, 17.0]))
    ch = gen_channel(16, 2, "los", rng, k_factor=np.inf, angles_rad=angles)
    G = gram(ch.H)
    assert abs(abs(G[0, 1]) - np.sqrt(G[0, 0].real * G[1, 1].real)) < 1e-9


def test_los_separated_users_not_colinear(rng):
    angles = np.deg2rad(np.array([-30.0, 40.0]))
    ch = gen_channel(16, 2, "los", rng, k_factor=np.inf, angles_rad=angles)
    G = gram(ch.H)
    assert abs(G[0, 1]) < 0.9 * np.sqrt(G[0, 0].real * G[1, 1].real)


def test_condition_number_matches_marchenko_pastur():
    # 128 x 16 i.i.d.: eigenvalue-ratio edge prediction
    # ((1 + sqrt(U/B)) / (1 - sqrt(U/B)))^2
    B, U = 128, 16
    r = np.sqrt(U / B)
    predicted = ((1 + r) / (1 - r)) ** 2
    ratios = []
    for seed in range(1000):
        ch = gen_channel(B, U, "nonlos", np.random.default_rng(seed))
        w = np.linalg.eigvalsh(gram(ch.H))
        ratios.append(w[-1] / w[0])
    median = np.median(ratios)
    assert abs(median - predicted) / predicted < 0.20


def test_reconstruction_exact(qam16, rng):
    ch = gen_channel(16, 4, "nonlos", rng)
    b = transmit(ch.H, qam16, 7, 10.0, rng)
    assert np.max(np.abs(b.Y - ch.H @ b.S - b.noise)) == 0.0


def test_noiseless_limit(qam16, rng):
    ch = gen_channel(16, 4, "nonlos", rng)
    b = transmit(ch.H, qam16, 3, np.inf, rng)
    assert np.array_equal(b.Y, ch.H @ b.S)
    assert b.N0 == 0.0


def test_noise_only_variance(qam16, rng):
    ch = gen_channel(64, 4, "nonlos", rng)
    b = transmit(ch.H, qam16, 400, 10.0, rng, all_zero=True)
    # 64 x 400 = 25600 entries per batch; pool several batches to reach 1e5
    samples = [b.Y]
    for _ in range(3):
        samples.append(transmit(ch.H, qam16, 400, 10.0, rng, all_zero=True).Y)
    Y = np.concatenate(samples, axis=1)
    emp = np.mean(np.abs(Y) ** 2)
    assert abs(emp - b.N0) / b.N0 < 0.05


def test_fresh_noise_per_transmission(qam16):
    # cross-correlation between the two noise columns vanishes relative to
    # their energy, so the second transmission sees fresh noise
    cross = 0.0
    energy = 0.0
    for seed in range(400):
        rng = np.random.default_rng(seed)
        ch = gen_channel(8, 2, "nonlos", rng)
        b = transmit(ch.H, qam16, 2, 5.0, rng, all_zero=True)
        cross += np.vdot(b.Y[:, 0], b.Y[:, 1])
        energy += 0.5 * (np.sum(np.abs(b.Y[:, 0]) ** 2)
                         + np.sum(np.abs(b.Y[:, 1]) ** 2))
    assert abs(cross) / energy < 0.05


def test_snr_definition(qam16, rng):
    ch = gen_channel(32, 4, "nonlos", rng)
    snr_db = 13.0
    N0 = noise_variance_for_snr(ch.H, snr_db)
    sig = np.sum(np.abs(ch.H) ** 2) / 32
    assert abs(10 * np.log10(sig / N0) - snr_db) < 1e-12


def test_estimate_channel_exact_when_noiseless(rng):
    ch = gen_channel(8, 4, "nonlos", rng)
    est = estimate_channel(ch.H, 0.0, 1.0, 4, rng)
    assert np.array_equal(est.H, ch.H)


def test_estimate_channel_error_variance(rng):
    B, U = 64, 8
    ch = gen_channel(B, U, "nonlos", rng)
    reps = 200  # 64*8*200 > 1e5 entries
    errs = []
    for _ in range(reps):
        est = estimate_channel(ch.H, N0=U * 1.0, Es=1.0, U=U, rng=rng)
        errs.append(est.H - ch.H)
    errs = np.stack(errs)
    emp = np.mean(np.abs(errs) ** 2)
    assert abs(emp - 1.0) < 0.05


def test_estimate_error_scales_inverse_u(rng):
    B = 32
    out = {}
    for U in (4, 8):
        ch = gen_channel(B, U, "nonlos", rng)
        errs = []
        for _ in range(300):
            est = estimate_channel(ch.H, N0=1.0, Es=1.0, U=U, rng=rng)
            errs.append(est.H - ch.H)
        out[U] = np.mean(np.abs(np.stack(errs)) ** 2)
    assert abs(out[4] / out[8] - 2.0) < 0.2


def test_matrix_dump_round_trip(tmp_path, rng):
    M = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    path = tmp_path / "m.cmat"
    dump_matrix(path, M)
    assert path.stat().st_size == 16 + 5 * 3 * 16
    back = load_matrix(path)
    assert np.array_equal(back, M)


def test_matrix_dump_rejects_garbage(tmp_path):
    path = tmp_path / "bad.cmat"
    path.write_bytes(b"not a matrix at all")
    with pytest.raises(ValueError):
        load_matrix(path)


def test_transmit_preconditions(qam16, rng):
    ch = gen_channel(8, 4, "nonlos", rng)
    with pytest.raises(ValueError):
        transmit(ch.H, qam16, 0, 10.0, rng)
    with pytest.raises(ValueError):
        transmit(ch.H, qam16, 2, float("nan"), rng)
    with pytest.raises(ValueError):
        estimate_channel(ch.H, -1.0, 1.0, 4, rng)
