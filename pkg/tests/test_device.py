import math

import numpy as np
import pytest

from ringpair import device, qstate
from ringpair.source import PumpParams

PUMP = PumpParams(10.8, 40.0, 51.0, 0.075)
PHI_PLUS = qstate.projector(qstate.bell_phi_plus())


class TestStateParams:
    def test_complex_sigma_folds_into_theta(self):
        params = device.StateParams(beta=0.5, sigma=0.8j, theta=0.0)
        assert params.sigma == pytest.approx(0.8)
        assert params.theta == pytest.approx(-math.pi / 2)

    def test_rejects_sigma_above_one(self):
        with pytest.raises(ValueError, match="sigma"):
            device.StateParams(beta=0.5, sigma=1.2)

    def test_rejects_beta_out_of_range(self):
        with pytest.raises(ValueError, match="beta"):
            device.StateParams(beta=1.5, sigma=0.5)


class TestBuildState:
    def test_bell_state_limit(self):
        rho = device.build_state(device.StateParams(0.5, 1.0, 0.0))
        assert qstate.purity(rho) == pytest.approx(1.0, abs=1e-12)
        assert qstate.fidelity(rho, PHI_PLUS) == pytest.approx(1.0, abs=1e-9)

    def test_single_source_is_separable(self):
        rho = device.build_state(device.StateParams(1.0, 0.73, 1.1))
        np.testing.assert_allclose(
            rho, qstate.projector(qstate.two_qubit_ket("0", "0")), atol=1e-15)

    def test_zero_overlap_is_mixed(self):
        rho = device.build_state(device.StateParams(0.5, 0.0))
        np.testing.assert_allclose(rho, np.diag([0.5, 0, 0, 0.5]), atol=1e-15)
        assert qstate.purity(rho) == pytest.approx(0.5, abs=1e-12)

    def test_validator_over_parameter_grid(self):
        for beta in np.linspace(0, 1, 11):
            for sigma in np.linspace(0, 1, 6):
                for theta in np.linspace(0, 2 * math.pi, 4):
                    device.build_state(device.StateParams(beta, sigma, theta))

    def test_coherence_phase_convention(self):
        rho = device.build_state(device.StateParams(0.5, 1.0, 0.25))
        assert rho[0, 3] == pytest.approx(0.5 * np.exp(-0.25j))
        assert rho[3, 0] == pytest.approx(0.5 * np.exp(+0.25j))


class TestBalance:
    def test_symmetric(self):
        assert device.balance_from_brightness(0.08, 0.08, 0.5) == pytest.approx(0.5)

    def test_unweighted_ratio_at_even_split(self):
        assert device.balance_from_brightness(0.06, 0.09, 0.5) == pytest.approx(0.4)

    def test_quadratic_weighting_compensates(self):
        # 0.54^2 * 0.06 / (0.54^2 * 0.06 + 0.46^2 * 0.09)
        beta = device.balance_from_brightness(0.06, 0.09, 0.54)
        assert beta == pytest.approx(0.4788177339901478, rel=1e-12)
        assert 0.4 < beta < 0.5

    def test_weighting_switch(self):
        linear = device.balance_from_brightness(0.06, 0.09, 0.54, weighting="linear")
        plain = device.balance_from_brightness(0.06, 0.09, 0.54, weighting="none")
        assert plain == pytest.approx(0.4)
        assert 0.4 < linear < 0.48
        with pytest.raises(ValueError, match="weighting"):
            device.balance_from_brightness(0.06, 0.09, 0.54, weighting="cubic")

    def test_rejects_zero_rates(self):
        with pytest.raises(ValueError):
            device.balance_from_brightness(0.0, 0.0, 0.5)


class TestRotations:
    @pytest.mark.parametrize("theta", np.linspace(-2 * math.pi, 2 * math.pi, 9))
    def test_unitary(self, theta):
        for u in (device.rz(theta), device.ry(theta)):
            np.testing.assert_allclose(u @ u.conj().T, np.eye(2), atol=1e-12)

    def test_rz_special_values(self):
        np.testing.assert_allclose(device.rz(0.0), np.eye(2), atol=1e-15)
        np.testing.assert_allclose(device.rz(math.pi), np.diag([1, -1]), atol=1e-12)
        np.testing.assert_allclose(device.rz(math.pi / 2), np.diag([1, 1j]), atol=1e-12)

    def test_ry_special_values(self):
        np.testing.assert_allclose(device.ry(0.0), np.eye(2), atol=1e-15)
        swap = device.ry(math.pi)
        np.testing.assert_allclose(np.abs(swap), [[0, 1], [1, 0]], atol=1e-12)
        bs = device.ry(math.pi / 2)
        np.testing.assert_allclose(np.abs(bs) ** 2, np.full((2, 2), 0.5), atol=1e-12)

    def test_mzi_reproduces_ry_at_balanced_couplers(self):
        for theta in np.linspace(-math.pi, 2 * math.pi, 13):
            np.testing.assert_allclose(device.mzi_transfer(theta), device.ry(theta),
                                       atol=1e-13)

    def test_mzi_stays_unitary_off_balance(self):
        u = device.mzi_transfer(0.7, r_in=0.54, r_out=0.47)
        np.testing.assert_allclose(u @ u.conj().T, np.eye(2), atol=1e-12)


class TestMeasurementProbabilities:
    def test_bell_computational_basis(self):
        p = device.measurement_probabilities(PHI_PLUS, device.MeasurementSetting())
        np.testing.assert_allclose(p, [0.5, 0, 0, 0.5], atol=1e-12)

    def test_bell_x_basis_oracle(self):
        # Direct matrix evaluation with locally constructed rotations.
        c = 1 / math.sqrt(2)
        ry_half = np.array([[c, -c], [c, c]])
        u = np.kron(ry_half, ry_half)
        expected = np.real(np.diag(u @ PHI_PLUS @ u.conj().T))
        setting = device.MeasurementSetting(theta_sy=math.pi / 2, theta_iy=math.pi / 2)
        p = device.measurement_probabilities(PHI_PLUS, setting)
        np.testing.assert_allclose(p, expected, atol=1e-12)
        np.testing.assert_allclose(p, [0.5, 0, 0, 0.5], atol=1e-12)

    def test_bell_fringe_antinode(self):
        setting = device.MeasurementSetting(
            theta_sy=math.pi / 2, theta_sz=0.8,
            theta_iy=math.pi / 2, theta_iz=math.pi - 0.8)
        p = device.measurement_probabilities(PHI_PLUS, setting)
        np.testing.assert_allclose(p, [0, 0.5, 0.5, 0], atol=1e-12)

    def test_probabilities_sum_to_one(self, rng):
        from conftest import random_density_matrix
        for _ in range(50):
            rho = random_density_matrix(rng)
            setting = device.MeasurementSetting(*rng.uniform(-math.pi, math.pi, 4))
            assert device.measurement_probabilities(rho, setting).sum() == pytest.approx(
                1.0, abs=1e-9)

    def test_phase_sum_invariance(self):
        rho = device.build_state(device.StateParams(0.43, 0.9, 0.7))
        base = device.MeasurementSetting(math.pi / 2, 0.3, math.pi / 2, 0.9)
        p0 = device.measurement_probabilities(rho, base)
        for delta in (0.1, 1.3, -2.2):
            shifted = device.MeasurementSetting(
                math.pi / 2, 0.3 + delta, math.pi / 2, 0.9 - delta)
            p1 = device.measurement_probabilities(rho, shifted)
            np.testing.assert_allclose(p0, p1, atol=1e-12)

    def test_fringe_visibility_matches_closed_form(self):
        # The port-00 fringe against theta_sz is a pure one-period sinusoid,
        # so its discrete Fourier amplitude over a uniform grid is exact.
        beta, sigma = 0.43, 0.9
        rho = device.build_state(device.StateParams(beta, sigma, 0.35))
        thetas = np.linspace(0, 2 * math.pi, 16, endpoint=False)
        p00 = np.array([
            device.measurement_probabilities(
                rho, device.MeasurementSetting(math.pi / 2, t, math.pi / 2, 0.0))[0]
            for t in thetas])
        spectrum = np.fft.rfft(p00)
        visibility = 2 * abs(spectrum[1]) / abs(spectrum[0])
        assert visibility == pytest.approx(2 * sigma * math.sqrt(beta * (1 - beta)),
                                           abs=1e-9)

    def test_unbalanced_couplers_lower_extinction(self):
        cfg = device.DeviceConfig(signal_coupler_in=0.6, signal_coupler_out=0.6,
                                  idler_coupler_in=0.6, idler_coupler_out=0.6)
        rho = device.build_state(device.StateParams(0.5, 1.0))
        thetas = np.linspace(0, 2 * math.pi, 32, endpoint=False)
        def fringe(config):
            rows = np.array([
                device.measurement_probabilities(
                    rho, device.MeasurementSetting(math.pi / 2, t, math.pi / 2, 0.0),
                    config)
                for t in thetas])
            np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-9)
            return rows[:, 0]
        ideal, lossy = fringe(None), fringe(cfg)
        assert lossy.min() > ideal.min() + 1e-4


class TestSimulateCounts:
    CONFIG = device.DeviceConfig(per_arm_transmission=0.0112, detector_efficiency=0.25,
                                 car=math.inf)

    def test_deterministic_for_fixed_seed(self):
        rho = device.build_state(device.StateParams(0.49, 0.9))
        setting = device.MeasurementSetting(math.pi / 2, 0.2, math.pi / 2, 0.0)
        a = device.simulate_counts(rho, setting, self.CONFIG, PUMP, 10.0, 42)
        b = device.simulate_counts(rho, setting, self.CONFIG, PUMP, 10.0, 42)
        np.testing.assert_array_equal(a.coincidences, b.coincidences)
        c = device.simulate_counts(rho, setting, self.CONFIG, PUMP, 10.0, 43)
        assert not np.array_equal(a.coincidences, c.coincidences)

    def test_concentrated_port_poisson_mean(self):
        # p = (1,0,0,0) at ~30 cps for 10 s: empty ports stay empty and the
        # filled port's counts average 300 over seeds.
        rho = qstate.projector(qstate.two_qubit_ket("0", "0"))
        setting = device.MeasurementSetting()
        totals = []
        for seed in range(40):
            rec = device.simulate_counts(rho, setting, self.CONFIG, PUMP, 10.0, seed)
            assert rec.coincidences[1:].sum() == 0
            totals.append(rec.coincidences[0])
        mean = np.mean(totals)
        # 5 sigma band for the mean of 40 Poisson(300) draws.
        assert abs(mean - 300.0) < 5 * math.sqrt(300.0 / 40)

    def test_car_sets_accidental_estimate(self):
        cfg = device.DeviceConfig(per_arm_transmission=0.0112,
                                  detector_efficiency=0.25, car=10.0)
        rho = device.build_state(device.StateParams(0.49, 0.9))
        rec = device.simulate_counts(rho, device.MeasurementSetting(), cfg, PUMP, 100.0, 0)
        rate = device.coincidence_rate(cfg, PUMP)
        assert rec.accidentals_estimate == pytest.approx(rate * 100.0 / 10.0)

    def test_rejects_negative_time(self):
        rho = device.build_state(device.StateParams(0.5, 0.5))
        with pytest.raises(ValueError):
            device.simulate_counts(rho, device.MeasurementSetting(), self.CONFIG,
                                   PUMP, -1.0, 0)

    def test_rate_backsolve_matches_paper_budget(self):
        # Inverting rate = R mu T^2 eta^2 for 30 cps gives T ~ -19.5 dB/arm.
        cfg = device.DeviceConfig(detector_efficiency=0.25)
        t = device.required_arm_transmission(cfg, PUMP, 30.0)
        assert t == pytest.approx(math.sqrt(30.0 / (51e6 * 0.075 * 0.25**2)), rel=1e-12)
        assert 10 * math.log10(t) == pytest.approx(-19.5, abs=0.05)
        check = device.DeviceConfig(detector_efficiency=0.25, per_arm_transmission=t)
        assert device.coincidence_rate(check, PUMP) == pytest.approx(30.0, rel=1e-9)


class TestFilter:
    CONFIG = device.DeviceConfig()

    def test_peak(self):
        assert device.filter_transmission(self.CONFIG, 0.0) == pytest.approx(1.0)

    def test_mid_band_floor(self):
        # Lorentzian at fsr/2 is below the 22 dB selectivity floor.
        assert device.filter_transmission(self.CONFIG, 320.0) == pytest.approx(
            10 ** (-2.2), rel=1e-9)

    def test_half_bandwidth(self):
        assert device.filter_transmission(self.CONFIG, 17.5) == pytest.approx(0.5, rel=1e-12)

    def test_periodic(self):
        assert device.filter_transmission(self.CONFIG, 640.0) == pytest.approx(1.0)

    def test_array_input(self):
        out = device.filter_transmission(self.CONFIG, np.array([0.0, 17.5, 320.0]))
        assert out.shape == (3,)


class TestRecordsIo:
    def test_csv_roundtrip(self, tmp_path):
        cfg = device.DeviceConfig(per_arm_transmission=0.0112,
                                  detector_efficiency=0.25, car=10.0)
        rho = device.build_state(device.StateParams(0.49, 0.9))
        records = [
            device.simulate_counts(
                rho, device.MeasurementSetting(0.1 * k, 0.2, 0.3, 0.4 * k),
                cfg, PUMP, 30.0, k)
            for k in range(3)
        ]
        path = tmp_path / "records.csv"
        device.records_to_csv(records, path)
        again = device.records_from_csv(path)
        assert len(again) == 3
        for a, b in zip(records, again):
            np.testing.assert_allclose(a.coincidences, b.coincidences)
            assert a.setting == b.setting
            assert a.accidentals_estimate == pytest.approx(b.accidentals_estimate)

    def test_device_config_from_file(self, tmp_path):
        path = tmp_path / "dev.cfg"
        path.write_text(
            "[couplers]\nfirst_reflectivity = 0.54\n"
            "[filters]\nbandwidth_ghz = 35\nselectivity_db = 22\nfsr_ghz = 640\n"
            "[detectors]\nefficiency = 0.25\n"
            "[counting]\nper_arm_transmission = 0.0112\ncar = 10\nrep_rate_mhz = 51\n")
        cfg = device.load_device_config(path)
        assert cfg.first_coupler_reflectivity == 0.54
        assert cfg.detector_efficiency == 0.25
        assert cfg.filter_fsr == 640.0
        assert cfg.car == 10.0
