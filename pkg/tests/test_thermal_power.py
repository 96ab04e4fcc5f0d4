import pytest
from hypothesis import given, strategies as st

from hmcsim.errors import ConfigurationError, ThermalShutdown
from hmcsim.protocol import RequestType
from hmcsim.thermal_power import (DEFAULT_POWER, DEFAULT_THERMAL, DeviceState, Status,
                                  ThermalModel, check_failure, cooling_power_required,
                                  cooling_preset, device_power, fit_line, load_cooling,
                                  steady_temperature, system_power)

RO, WO, RW = RequestType.READ_ONLY, RequestType.WRITE_ONLY, RequestType.READ_MODIFY_WRITE
CFG2 = cooling_preset("Cfg2")


def test_cooling_presets():
    presets = load_cooling()
    assert [presets[f"Cfg{i}"].idle_temperature for i in range(1, 5)] == [43.1, 51.7, 62.3, 71.6]
    assert [presets[f"Cfg{i}"].cooling_power for i in range(1, 5)] == [19.32, 15.9, 13.9, 10.78]
    with pytest.raises(ConfigurationError):
        cooling_preset("Cfg9")


def test_temperature_rise():
    for rtype, rise in ((RO, 3.0), (RW, 4.0)):
        dt = steady_temperature(DEFAULT_THERMAL, CFG2, 20, rtype) - \
            steady_temperature(DEFAULT_THERMAL, CFG2, 5, rtype)
        assert dt == pytest.approx(rise, abs=1e-12)


@pytest.mark.parametrize("rtype", list(RequestType))
def test_idle_intercept(rtype):
    for cfg in load_cooling().values():
        assert steady_temperature(DEFAULT_THERMAL, cfg, 0, rtype) == cfg.idle_temperature


def test_slope_ordering_enforced():
    assert DEFAULT_THERMAL.slope(WO) > DEFAULT_THERMAL.slope(RW) > DEFAULT_THERMAL.slope(RO)
    with pytest.raises(ConfigurationError):
        ThermalModel(slopes=((RO, 1.0), (RW, 0.5), (WO, 2.0)))


def test_negative_bandwidth():
    with pytest.raises(ValueError):
        steady_temperature(DEFAULT_THERMAL, CFG2, -1, RO)


def test_device_power():
    assert device_power(DEFAULT_POWER, 20) - device_power(DEFAULT_POWER, 5) == \
        pytest.approx(2.0, abs=1e-12)
    assert device_power(DEFAULT_POWER, 0) == 0
    assert system_power(DEFAULT_POWER, 0) == 100.0


def test_check_failure():
    assert check_failure(80, RO) is Status.OK
    assert check_failure(80, WO) is Status.THERMAL_FAILURE
    assert check_failure(80, RW) is Status.THERMAL_FAILURE
    for rtype in RequestType:
        assert check_failure(20, rtype) is Status.OK
    assert check_failure(85, RO) is Status.THERMAL_FAILURE


@given(st.floats(0, 150), st.floats(0, 50), st.sampled_from(list(RequestType)))
def test_failure_monotone(t, dt, rtype):
    if check_failure(t, rtype) is Status.THERMAL_FAILURE:
        assert check_failure(t + dt, rtype) is Status.THERMAL_FAILURE


def test_device_state_halts_until_reset():
    dev = DeviceState()
    assert dev.apply(60, WO) is Status.OK
    assert dev.apply(76, WO) is Status.THERMAL_FAILURE
    assert dev.halted and dev.data_lost
    with pytest.raises(ThermalShutdown):
        dev.apply(40, RO)
    dev.reset()
    assert dev.apply(40, RO) is Status.OK and not dev.data_lost


def test_cooling_power_anchor():
    req = cooling_power_required(71.6, 0, RO)
    assert req.watts == pytest.approx(10.78) and req.feasible


def test_cooling_power_grows_with_bandwidth():
    a = cooling_power_required(60, 5, RO)
    b = cooling_power_required(60, 21, RO)
    assert b.watts > a.watts
    assert b.watts - a.watts == pytest.approx(1.5, rel=0.05)


def test_cooling_power_infeasible():
    assert not cooling_power_required(40, 0, RO).feasible
    assert not cooling_power_required(45, 20, WO).feasible


def test_cooling_power_extrapolates():
    hot = cooling_power_required(80, 0, RO).watts
    assert hot < 10.78


def test_fit_line():
    assert fit_line([0, 1, 2], [1, 3, 5]) == pytest.approx((2.0, 1.0))
    assert fit_line([1, 1], [2, 3]) is None
