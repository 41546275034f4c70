import numpy as np
import pytest
from scipy import stats

from scadasim.attacker.identification import (ArmaxModel, ArxModel, FirModel, armax_identify, arx_identify,
                                              fir_identify_step, fir_train, simulate_arx)
from scadasim.attacker.mitm import (AttackConfig, AttackerNode, CaptureEntry, CaptureLog, Direction, Mode,
                                    Strategy, forge_measurement)
from scadasim.control import LqgDesign, default_model, kalman_step
from scadasim.errors import ContractViolation, IdentificationError
from scadasim.harness.runner import build_round
from scadasim.harness.scenario import ScenarioConfig
from scadasim.network import NodeId, Role
from scadasim.protocol import modbus
from scadasim.protocol.registers import DISTANCE_REGISTER, FixedPoint

THRESHOLD = 15.0


# identification: LMS

def test_fir_one_tap_recovery():
    rng = np.random.default_rng(0)
    m = FirModel.zeros(1, mu=0.1)
    for u in rng.standard_normal(500):
        fir_identify_step(m, u, 0.8 * u)
    assert abs(m.taps[0] - 0.8) < 1e-3


def test_fir_zero_error_keeps_taps():
    m = FirModel(np.array([0.3, -0.2]), mu=0.5)
    m.input_history = np.array([0.0, 1.0])
    # after pushing u=2 the history is [2, 0] and the prediction 0.6
    fir_identify_step(m, 2.0, 0.6)
    assert np.array_equal(m.taps, [0.3, -0.2])


def test_fir_zero_step_freezes():
    rng = np.random.default_rng(1)
    m = FirModel(np.array([0.1, 0.2, 0.3]), mu=0.0)
    for u, y in rng.standard_normal((200, 2)):
        fir_identify_step(m, u, y)
    assert np.array_equal(m.taps, [0.1, 0.2, 0.3])


def test_fir_divergence_guard_halves_step():
    rng = np.random.default_rng(2)
    m = FirModel.zeros(4, mu=50.0)
    m.tap_cap = 10.0
    for u in rng.standard_normal(300):
        fir_identify_step(m, u, 3.0 * u)
        assert np.all(np.isfinite(m.taps)) and np.linalg.norm(m.taps) <= 10.0
    assert m.mu_halvings > 0 and m.mu < 50.0


def test_fir_train_recovers_impulse_response_with_lag():
    rng = np.random.default_rng(3)
    h = np.array([0.5, 0.25, -0.1])
    u = rng.standard_normal(4000)
    y = np.zeros_like(u)
    for t in range(len(u)):
        for i, hi in enumerate(h):
            if t - 1 - i >= 0:
                y[t] += hi * u[t - 1 - i]
    model, um, ym = fir_train(u, y, T=3, mu=0.05, lag=1, center=False)
    assert um == ym == 0.0
    assert np.max(np.abs(model.taps - h)) < 1e-3


def test_fir_model_contract():
    with pytest.raises(ContractViolation):
        FirModel(np.zeros(0))
    with pytest.raises(ContractViolation):
        FirModel(np.zeros(2), mu=-1.0)


# identification: ARX / ARMAX

def arx_data(a, b, nk, n, seed=0, e=None):
    u = np.random.default_rng(seed).standard_normal(n)
    model = ArxModel(len(a), len(b), nk, np.array(list(a) + list(b), dtype=float))
    return u, simulate_arx(model, u, e=e)


def test_arx_noise_free_recovery():
    u, y = arx_data([-0.5], [0.1], 1, 400)
    m = arx_identify(u, y, 1, 1, 1)
    assert np.max(np.abs(m.theta - [-0.5, 0.1])) < 1e-6


def test_arx_plant_structure_recovery_and_holdout():
    # the default plant's distance output as seen through the registers
    a, b = [-1.6, 0.6], [-0.04]
    u, y = arx_data(a, b, 2, 800, seed=5)
    m = arx_identify(u[:600], y[:600], 2, 1, 2)
    assert np.max(np.abs(m.theta - (a + b))) < 1e-6
    for t in range(600, 800):
        pred = m.predict_one(y[t - 1::-1], u[t - 1::-1])
        assert abs(pred - y[t]) < 1e-6


def test_arx_requires_excitation_and_samples():
    with pytest.raises(IdentificationError):
        arx_identify(np.zeros(100), np.zeros(100), 1, 1, 1)
    u, y = arx_data([-0.5], [0.1], 1, 19)
    with pytest.raises(IdentificationError):
        arx_identify(u, y, 1, 1, 1)
    with pytest.raises(ContractViolation):
        arx_identify(u, y[:-1], 1, 1, 1)


def test_arx_stability_flag():
    assert ArxModel(1, 1, 1, np.array([-0.5, 1.0])).is_stable()
    assert not ArxModel(1, 1, 1, np.array([-1.5, 1.0])).is_stable()


def test_armax_without_noise_order_equals_arx():
    rng = np.random.default_rng(6)
    u = rng.standard_normal(500)
    y = rng.standard_normal(500)
    arx = arx_identify(u, y, 2, 2, 1)
    armax = armax_identify(u, y, 2, 2, 0, 1)
    assert np.array_equal(arx.theta, armax.theta) and not armax.fallback


def test_armax_noise_free_recovers_ab():
    u, y = arx_data([-0.7], [0.3], 1, 500, seed=7)
    m = armax_identify(u, y, 1, 1, 1, 1)
    assert not m.fallback
    assert np.max(np.abs(m.theta[:2] - [-0.7, 0.3])) < 1e-4


def test_armax_recovers_noise_model_statistically():
    n = 20000
    rng = np.random.default_rng(8)
    e = 0.3 * rng.standard_normal(n)
    truth = ArmaxModel(1, 1, 1, np.array([-0.7, 0.3, 0.5]), nc=1)
    u = rng.standard_normal(n)
    y = simulate_arx(truth, u, e=e)
    m = armax_identify(u, y, 1, 1, 1, 1)
    assert not m.fallback
    assert np.max(np.abs(m.theta - truth.theta)) < 0.05
    # the ARX estimate is biased by the coloured noise; ARMAX is closer
    arx = arx_identify(u, y, 1, 1, 1)
    assert abs(m.a[0] + 0.7) < abs(arx.a[0] + 0.7)


def test_armax_fallback_flag_when_not_converged():
    n = 2000
    rng = np.random.default_rng(9)
    truth = ArmaxModel(1, 1, 1, np.array([-0.7, 0.3, 0.5]), nc=1)
    u = rng.standard_normal(n)
    y = simulate_arx(truth, u, e=0.3 * rng.standard_normal(n))
    m = armax_identify(u, y, 1, 1, 1, 1, max_iter=1)
    assert m.fallback
    assert np.array_equal(m.theta[:2], arx_identify(u, y, 1, 1, 1).theta)
    assert m.c[0] == 0.0


def test_simulate_arx_matches_difference_equation():
    u = np.arange(6, dtype=float)
    m = ArxModel(1, 2, 1, np.array([-0.5, 1.0, 2.0]))
    y = simulate_arx(m, u)
    ref = np.zeros(6)
    for t in range(6):
        ref[t] = (0.5 * ref[t - 1] if t >= 1 else 0) + (u[t - 1] if t >= 1 else 0) + (2 * u[t - 2] if t >= 2 else 0)
    assert np.allclose(y, ref)


# capture log

def test_capture_log_is_append_only_in_tick_order():
    log = CaptureLog()
    log.append(CaptureEntry(3, Direction.TO_PLANT, (), b"", "read"))
    with pytest.raises(ContractViolation):
        log.append(CaptureEntry(2, Direction.TO_PLANT, (), b"", "read"))
    rows = list(log.to_rows())
    assert rows[0][:3] == (3, Direction.TO_PLANT.value, "read")


# attacker on the fabric

def cfg(strategy="replay", start=60, mode="stationary", **attack):
    c = ScenarioConfig()
    c.watermark.mode = mode
    c.attack = AttackConfig(Strategy(strategy), attack_start_tick=start, **attack)
    c.round_ticks = 200
    return c


def run(c, ticks, seed=11, deliveries=False, attack=None):
    rnd = build_round(c, seed, THRESHOLD, attack=attack)
    rnd.fabric.record_deliveries = deliveries
    rnd.fabric.run_until(ticks - 1)
    return rnd


def test_no_frames_before_hijack():
    rnd = build_round(cfg(hijack_tick=10), 1, THRESHOLD)
    rnd.fabric.run_until(9)
    assert rnd.attacker.frames_seen == 0 and len(rnd.attacker.state.capture) == 0
    rnd.fabric.run_until(20)
    assert rnd.attacker.frames_seen > 0


def test_capture_counts_every_frame_on_tapped_leg():
    rnd = run(cfg(start=150), 100)
    ch = rnd.fabric.channel("rtu-0", "plc-0")
    # read request, read response, write request, write response per tick
    assert len(rnd.attacker.state.capture) == ch.frames_sent == rnd.attacker.frames_seen == 4 * 100
    resp = rnd.attacker.state.capture.of_kind("read_response")
    assert len(resp) == 100
    assert [e.tick for e in resp] == list(range(100))
    assert all(e.direction is Direction.TO_CONTROLLER for e in resp)


def test_capture_csv_export(tmp_path):
    rnd = run(cfg(start=150), 5)
    path = tmp_path / "capture.csv"
    rnd.attacker.state.capture.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "tick,direction,kind,values,raw_hex"
    assert len(lines) == 1 + 4 * 5
    first = lines[1].split(",")
    assert bytes.fromhex(first[4]) == rnd.attacker.state.capture.entries[0].raw


def test_captured_values_match_register_decode():
    rnd = run(cfg(start=150), 50)
    codec = ScenarioConfig().topology.codecs().distance()
    for e in rnd.attacker.state.capture.of_kind("read_response"):
        regs = modbus.parse_read_response(modbus.decode_modbus(e.raw))
        assert e.values == (codec.decode(regs[DISTANCE_REGISTER]),)


@pytest.mark.parametrize("strategy", ["replay", "fir", "arx", "armax"])
def test_passive_attacker_is_transparent(strategy):
    c = cfg(strategy, start=150)
    with_tap = run(c, 120, deliveries=True)
    without = run(c, 120, deliveries=True, attack=AttackConfig(Strategy.NONE))
    assert with_tap.attacker.state.mode is Mode.PASSIVE
    assert [r.g_t for r in with_tap.controller.trace] == [r.g_t for r in without.controller.trace]
    assert [r.y for r in with_tap.controller.trace] == [r.y for r in without.controller.trace]

    def e2e(rnd):
        return [(ev.source.label, ev.destination.label, ev.frame) for ev in rnd.fabric.delivered
                if ev.target == ev.destination]

    assert e2e(with_tap) == e2e(without)


def test_no_active_behaviour_before_attack_start():
    c = cfg("fir", start=80)
    attacked = run(c, 120)
    clean = run(c, 120, attack=AttackConfig(Strategy.NONE))
    pre = [r.y for r in attacked.controller.trace if r.tick < 80]
    assert pre == [r.y for r in clean.controller.trace if r.tick < 80]
    assert attacked.attacker.state.activated_at == 80
    assert attacked.attacker.writes_active == 40 and attacked.attacker.reads_active == 40


def test_replay_first_active_frame():
    rnd = run(cfg(start=60), 61, deliveries=True)
    att = rnd.attacker
    to_ctl = [ev for ev in rnd.fabric.delivered
              if ev.source.label == "plc-0" and ev.destination.label == "rtu-0"
              and ev.frame[7] == modbus.READ_HOLDING]
    live = [ev for ev in to_ctl if ev.target.label == "attacker"][-1]
    forged = [ev for ev in to_ctl if ev.target.label == "rtu-0"][-1]
    live_f, forged_f = modbus.decode_modbus(live.frame), modbus.decode_modbus(forged.frame)
    assert forged_f.payload == att.cap_y_raw[0]
    assert forged_f.transaction_id == live_f.transaction_id
    assert forged_f.payload != live_f.payload


def test_replay_cycles_through_capture():
    rnd = run(cfg(start=30), 100)
    ys = [r.y for r in rnd.controller.trace]
    assert ys[30:60] == ys[0:30] and ys[60:90] == ys[0:30]


def test_replayed_frames_accepted_by_controller():
    rnd = run(cfg(start=100), 200)
    assert rnd.controller.faults == 0
    assert rnd.rtu.dropped == 0
    assert len(rnd.controller.trace) == 200


def test_attack_with_empty_capture_stays_passive():
    rnd = run(cfg(start=0), 20)
    st = rnd.attacker.state
    assert st.mode is Mode.PASSIVE and st.aborted and st.activated_at is None


def test_identification_failure_aborts_to_passive():
    # too few samples for the requested orders
    rnd = run(cfg("arx", start=30, na=4, nb=4), 60)
    assert rnd.attacker.state.mode is Mode.PASSIVE and "minimum" in rnd.attacker.state.aborted


def test_forging_without_model_is_rejected():
    node = AttackerNode("a", AttackConfig(Strategy.FIR), NodeId("p", Role.PLC), NodeId("r", Role.RTU),
                        FixedPoint(100.0), FixedPoint(1000.0))
    node.cap_y = [1.0]
    with pytest.raises(ContractViolation):
        forge_measurement(node, 0)


def test_replay_without_watermark_looks_attack_free():
    c = cfg("replay", start=400, mode="disabled")
    attacked, clean = [], []
    for seed in range(8):
        a = run(c, 1000, seed=seed)
        b = run(c, 1000, seed=seed + 100, attack=AttackConfig(Strategy.NONE))
        attacked += [r.g_t for r in a.controller.trace[400::5]]
        clean += [r.g_t for r in b.controller.trace[400::5]]
    assert stats.ks_2samp(attacked, clean).pvalue > 0.01


def test_mistimed_start_is_caught_quickly():
    hits = 0
    for seed in range(9):
        c = cfg("fir", start=25)
        c.plant.x0 = [3.0, 0.0]
        rnd = run(c, 60, seed=seed)
        g = [r.g_t for r in rnd.controller.trace if 25 <= r.tick < 25 + c.detector.gwindow]
        hits += max(g) >= THRESHOLD
    assert hits >= 5


def test_perfect_model_cancels_residual():
    """Noise-free loop, exact plant model, free-running forgery: zero residual."""
    model = default_model()
    design = LqgDesign(model)
    L, K = design.L, design.K
    ref = np.array([2.0, 0.0])
    rng = np.random.default_rng(12)
    wm = 0.5 * rng.standard_normal(400)
    x = np.array([2.5, 0.0])
    xh = x.copy()
    u_prev = np.zeros(1)
    node = AttackerNode("a", AttackConfig(Strategy.ARX, forge_mode="free_run", nk=1),
                        NodeId("p", Role.PLC), NodeId("r", Role.RTU), FixedPoint(100.0), FixedPoint(1000.0))
    node.state.model = ArxModel(2, 2, 1, np.array([-1.6, 0.6, 0.0, -0.04]))
    residuals = []
    for t in range(400):
        if t > 0:
            x = model.A @ x + model.B @ u_prev
        if t < 200:
            y = float((model.C @ x)[0])
            node.cap_y.append(y)
        else:
            y = forge_measurement(node, t - 200)
        xh, _, r = kalman_step(xh, K, model, u_prev, [y])
        u = -L @ (xh - ref) + wm[t]
        if t < 200:
            node.cap_u.append(float(u[0]))
        else:
            node.live_u.append(float(u[0]))
            residuals.append(float(r[0]))
        u_prev = u
    assert np.max(np.abs(residuals)) < 1e-9
