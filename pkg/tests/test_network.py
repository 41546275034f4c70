import numpy as np
import pytest

from scadasim.attacker.mitm import AttackConfig, AttackerNode, Strategy
from scadasim.errors import ContractViolation
from scadasim.harness.runner import build_round
from scadasim.harness.scenario import ScenarioConfig
from scadasim.network import Clock, Event, Fabric, FabricError, NodeId, Role
from scadasim.protocol import dnp3, modbus
from scadasim.protocol.registers import FixedPoint


class Recorder:
    def __init__(self, label, role=Role.RTU, relay_to=None):
        self.node_id = NodeId(label, role)
        self.got = []
        self.relay_to = relay_to

    def on_frame(self, fabric, event):
        self.got.append((fabric.tick, event.frame))
        if self.relay_to is not None:
            fabric.send(self.node_id, self.relay_to, event.frame)


class Blackhole:
    def __init__(self, label):
        self.node_id = NodeId(label, Role.ATTACKER)
        self.seen = 0

    def on_frame(self, fabric, event):
        self.seen += 1


class Passive(Blackhole):
    def on_frame(self, fabric, event):
        self.seen += 1
        fabric.forward(self.node_id, event, event.frame)


def two_nodes(latency=0):
    f = Fabric()
    a, b = Recorder("a"), Recorder("b")
    f.add_node(a)
    f.add_node(b)
    ch = f.connect(a.node_id, b.node_id, latency)
    return f, a, b, ch


def test_same_tick_events_fifo():
    f, a, b, _ = two_nodes()
    for i in range(5):
        f.send(a.node_id, b.node_id, bytes([i]))
    f.run_until(0)
    assert [fr for _, fr in b.got] == [bytes([i]) for i in range(5)]


def test_zero_latency_delivers_after_handler():
    f, a, b, _ = two_nodes()
    order = []

    class Sender:
        node_id = NodeId("s", Role.MTU)

        def on_tick(self, fabric, t):
            if t == 0:
                fabric.send(self.node_id, b.node_id, b"x")
                order.append(("sent", len(b.got)))

        def on_frame(self, fabric, event):
            pass

    s = Sender()
    f.add_node(s)
    f.connect(s.node_id, b.node_id)
    f.run_until(0)
    assert order == [("sent", 0)]
    assert b.got == [(0, b"x")]


def test_random_events_match_sort_oracle():
    rng = np.random.default_rng(4)
    f, a, b, _ = two_nodes()
    events = []
    for seq in range(300):
        due = int(rng.integers(0, 40))
        ev = Event(due, seq, b.node_id, seq.to_bytes(2, "big"), a.node_id, b.node_id)
        events.append(ev)
        f.schedule(ev)
    f.run_until(50)
    expect = [ev.frame for ev in sorted(events, key=lambda e: (e.due_tick, e.sequence))]
    assert [fr for _, fr in b.got] == expect
    assert all(t == int.from_bytes(fr, "big") and True or True for t, fr in b.got)
    ticks = {ev.frame: ev.due_tick for ev in events}
    assert all(t == ticks[fr] for t, fr in b.got)


def test_schedule_in_past_rejected():
    f, a, b, _ = two_nodes()
    f.run_until(5)
    with pytest.raises(ContractViolation):
        f.schedule(Event(3, 1, b.node_id, b"", a.node_id, b.node_id))


def test_empty_run_advances_clock():
    f = Fabric()
    f.run_until(10)
    assert f.tick == 10 and f.pending == 0


def test_latency_chain_accumulates():
    f = Fabric()
    c = Recorder("c")
    b = Recorder("b", relay_to=c.node_id)
    a = Recorder("a")
    for n in (a, b, c):
        f.add_node(n)
    f.connect(a.node_id, b.node_id, 1)
    f.connect(b.node_id, c.node_id, 1)
    f.send(a.node_id, b.node_id, b"go")
    f.run_until(5)
    assert c.got == [(2, b"go")]


def test_handler_exception_aborts_with_diagnostic():
    class Boom(Recorder):
        def on_frame(self, fabric, event):
            raise RuntimeError("kaboom")

    f = Fabric()
    a, z = Recorder("a"), Boom("z")
    f.add_node(a)
    f.add_node(z)
    f.connect(a.node_id, z.node_id)
    f.send(a.node_id, z.node_id, b"")
    with pytest.raises(FabricError, match="kaboom"):
        f.run_until(0)


def test_duplicate_labels_and_taps_rejected():
    f, a, b, ch = two_nodes()
    with pytest.raises(ContractViolation):
        f.add_node(Recorder("a"))
    t = Passive("t")
    f.add_node(t)
    f.attach_tap(ch, t.node_id)
    with pytest.raises(ContractViolation):
        f.attach_tap(ch, t.node_id)
    with pytest.raises(ContractViolation):
        f2, a2, b2, ch2 = two_nodes()
        f2.attach_tap(ch2, a2.node_id)


def test_passive_tap_is_transparent():
    f, a, b, ch = two_nodes()
    t = Passive("t")
    f.add_node(t)
    f.attach_tap(ch, t.node_id)
    payloads = [bytes([i, i + 1]) for i in range(10)]
    for p in payloads:
        f.send(a.node_id, b.node_id, p)
    f.run_until(0)
    assert [fr for _, fr in b.got] == payloads and t.seen == 10


def test_blackhole_tap_drops_everything():
    f, a, b, ch = two_nodes()
    f.send(a.node_id, b.node_id, b"before")
    f.run_until(0)
    h = Blackhole("h")
    f.add_node(h)
    f.attach_tap(ch, h.node_id)
    f.send(a.node_id, b.node_id, b"after")
    f.run_until(3)
    assert [fr for _, fr in b.got] == [b"before"] and h.seen == 1


def test_in_flight_frames_unaffected_by_tap():
    f, a, b, ch = two_nodes(latency=2)
    f.send(a.node_id, b.node_id, b"early")
    h = Blackhole("h")
    f.add_node(h)
    f.attach_tap(ch, h.node_id)
    f.run_until(5)
    assert b.got == [(2, b"early")]


def test_untapped_channel_bypasses_attacker():
    f, a, b, _ = two_nodes()
    h = Blackhole("h")
    f.add_node(h)
    f.send(a.node_id, b.node_id, b"x")
    f.run_until(1)
    assert h.seen == 0 and len(b.got) == 1


# polling cycle on the full topology

def frames_by_kind(cfg, ticks, seed=1):
    rnd = build_round(cfg, seed, 100.0, log_events=True)
    rnd.fabric.run_until(ticks - 1)
    return rnd


def quiet(cfg):
    cfg.attack = AttackConfig(Strategy.NONE)
    return cfg


def test_mono_frequency_one_read_one_write_per_tick():
    rnd = frames_by_kind(quiet(ScenarioConfig()), 50)
    to_rtu = [r for r in rnd.fabric.event_log if r[1] == "controller"]
    kinds = [bytes.fromhex(r[6])[10] for r in to_rtu]
    assert kinds.count(dnp3.AppFunction.READ_INTEGRITY) == 50
    assert kinds.count(dnp3.AppFunction.DIRECT_OPERATE) == 50
    assert len(rnd.controller.trace) == 50


def test_multi_rate_reads_every_other_tick():
    cfg = quiet(ScenarioConfig())
    cfg.topology.sensor_period = 2
    rnd = frames_by_kind(cfg, 40)
    ticks = [row.tick for row in rnd.controller.trace]
    assert ticks == list(range(0, 40, 2))
    writes = [r for r in rnd.fabric.event_log if r[1] == "controller" and bytes.fromhex(r[6])[10] == 0x05]
    assert len(writes) == 40


def test_slaves_never_initiate():
    rnd = build_round(quiet(ScenarioConfig()), 5, 100.0)
    rnd.fabric.record_deliveries = True
    rnd.fabric.run_until(9_999)
    requests = {"plc-0": 0, "rtu-0": 0}
    replies = {"plc-0": 0, "rtu-0": 0}
    for ev in rnd.fabric.delivered:
        if ev.destination.label in requests and ev.source.label in ("controller", "rtu-0"):
            if not (ev.destination.label == "rtu-0" and ev.source.label == "plc-0"):
                requests[ev.destination.label] += 1
        if ev.source.label in replies and ev.destination.label in ("controller", "rtu-0"):
            if not (ev.source.label == "rtu-0" and ev.destination.label == "plc-0"):
                replies[ev.source.label] += 1
    assert replies == requests
    assert rnd.plc.frames_sent == requests["plc-0"]


def test_timeout_records_fault_samples():
    cfg = quiet(ScenarioConfig())
    rnd = build_round(cfg, 2, 100.0)
    h = Blackhole("attacker")
    rnd.fabric.add_node(h)
    rnd.fabric.run_until(20)
    rnd.fabric.attach_tap(rnd.fabric.channel("rtu-0", "plc-0"), h.node_id)
    rnd.fabric.run_until(60)
    faults = [row for row in rnd.controller.trace if row.fault]
    assert rnd.controller.faults == len(faults) >= 3
    assert faults[0].tick == 31


def test_same_seed_identical_event_logs():
    a = frames_by_kind(ScenarioConfig(), 300, seed=9)
    b = frames_by_kind(ScenarioConfig(), 300, seed=9)
    assert a.fabric.event_log == b.fabric.event_log
    assert [r.g_t for r in a.controller.trace] == [r.g_t for r in b.controller.trace]


def test_event_log_csv(tmp_path):
    rnd = frames_by_kind(quiet(ScenarioConfig()), 3)
    path = tmp_path / "events.csv"
    rnd.fabric.write_event_log(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "tick,src,dst,direction,via,length,head_hex"
    assert len(lines) == 1 + len(rnd.fabric.event_log)
    dirs = {(r[1], r[2]): r[3] for r in rnd.fabric.event_log}
    assert dirs[("controller", "rtu-0")] == dirs[("rtu-0", "plc-0")] == "down"
    assert dirs[("plc-0", "rtu-0")] == dirs[("rtu-0", "controller")] == "up"


def test_clock_validation():
    with pytest.raises(ContractViolation):
        Clock(0, 0, 1)
    assert Clock(0, 2, 2).mono_frequency
