import itertools
import threading
import time

import numpy as np

from gazeseg.backend import ReferenceBackend, SegmentResult
from gazeseg.engine import Engine, EngineConfig
from gazeseg.gaze import GazeSample, ScanpathSpec, ScanpathTarget, simulate_scanpath
from gazeseg.geometry import ScreenPoint
from gazeseg.volume import MaskSlice

STEP_US = 16_667


def make_engine(tmp_path=None, backend=None, **cfg):
    cfg.setdefault("dispatch", "sync")
    cfg.setdefault("gaze_source", "ui-mouse")
    config = EngineConfig(**cfg)
    return Engine(
        config,
        backend or ReferenceBackend(),
        clock_us=(lambda c=itertools.count(0, 1000): next(c)),
    )


def drain(q):
    out = []
    while not q.empty():
        out.append(q.get_nowait())
    return out


def dwell_samples(x, y, n=12, t0=0):
    return [GazeSample(t0 + i * STEP_US, ScreenPoint(x, y)) for i in range(n)]


def feed(engine, samples):
    for s in samples:
        engine.ingest(s)


class TestMessageStateMachine:
    def test_unknown_type(self):
        engine = make_engine()
        replies = engine.handle_client({"type": "bogus"})
        assert replies[0]["type"] == "error"
        engine.close()

    def test_load_image_broadcasts_meta(self, blob_volume):
        engine = make_engine()
        q = engine.subscribe()
        assert engine.handle_client({"type": "load_image", "path": blob_volume}) == []
        messages = drain(q)
        assert [m["type"] for m in messages] == ["image_meta"]
        meta = messages[0]
        assert (meta["iw"], meta["ih"], meta["depth"]) == (128, 128, 3)
        assert meta["slice"] == 0
        assert len(meta["image_id"]) == 64
        engine.close()

    def test_load_missing_image_is_error(self):
        engine = make_engine()
        replies = engine.handle_client({"type": "load_image", "path": "/no/such.gsv"})
        assert replies[0]["type"] == "error"
        assert engine.volume is None
        engine.close()

    def test_set_slice_out_of_range_state_unchanged(self, blob_volume):
        engine = make_engine()
        engine.handle_client({"type": "load_image", "path": blob_volume})
        replies = engine.handle_client({"type": "set_slice", "z": 3})
        assert replies[0]["type"] == "error"
        assert engine.slice_index == 0
        replies = engine.handle_client({"type": "set_slice", "z": -1})
        assert replies[0]["type"] == "error"
        assert engine.slice_index == 0
        engine.close()

    def test_set_slice_without_image(self):
        engine = make_engine()
        assert engine.handle_client({"type": "set_slice", "z": 0})[0]["type"] == "error"
        engine.close()

    def test_set_mode_switches_and_clears_points(self, blob_volume):
        engine = make_engine()
        engine.handle_client({"type": "load_image", "path": blob_volume})
        engine.handle_client({"type": "start_tracking"})
        feed(engine, dwell_samples(60, 50))
        feed(engine, dwell_samples(100, 100, t0=STEP_US * 30))
        feed(engine, dwell_samples(10, 10, t0=STEP_US * 60, n=1))  # break the run
        assert len(engine.prompt().points) == 2
        engine.handle_client({"type": "set_mode", "mode": "one_point"})
        prompt = engine.prompt()
        assert prompt.mode.value == "one_point"
        assert prompt.points == ()
        engine.close()

    def test_bad_mode_rejected(self):
        engine = make_engine()
        assert engine.handle_client({"type": "set_mode", "mode": "boxes"})[0]["type"] == "error"
        engine.close()

    def test_save_without_mask_is_error(self, blob_volume):
        engine = make_engine()
        engine.handle_client({"type": "load_image", "path": blob_volume})
        replies = engine.handle_client({"type": "save_mask"})
        assert replies[0]["type"] == "error"
        engine.close()

    def test_save_mask_writes_file_and_acks(self, blob_volume, tmp_path):
        engine = make_engine(mask_dir=str(tmp_path / "masks"))
        q = engine.subscribe()
        engine.handle_client({"type": "load_image", "path": blob_volume})
        engine.handle_client({"type": "start_tracking"})
        feed(engine, dwell_samples(60, 50))
        feed(engine, dwell_samples(600, 600, t0=STEP_US * 40))  # far: completes fixation
        engine.handle_client({"type": "save_mask"})
        acks = [m for m in drain(q) if m["type"] == "saved_ack"]
        assert len(acks) == 1
        import os

        assert os.path.exists(acks[0]["path"])
        assert os.path.exists(acks[0]["path"] + ".meta")
        engine.close()

    def test_gaze_feed_rejected_for_internal_sources(self, tmp_path):
        scan = tmp_path / "s.txt"
        scan.write_text("100 100 300\n")
        engine = make_engine(gaze_source=f"simulate:{scan}")
        replies = engine.handle_client(
            {"type": "gaze_feed", "t_us": 0, "sx": 1.0, "sy": 1.0, "valid": 1}
        )
        assert replies[0]["type"] == "error"
        engine.close()

    def test_set_window_changes_meta(self, blob_volume):
        engine = make_engine()
        engine.handle_client({"type": "load_image", "path": blob_volume})
        q = engine.subscribe()
        engine.handle_client({"type": "set_window", "center": 450.0, "width": 900.0})
        meta = drain(q)[0]
        assert meta["window"] == {"center": 450.0, "width": 900.0}
        assert engine.handle_client({"type": "set_window", "center": 0, "width": 0})[0][
            "type"
        ] == "error"
        engine.close()


class TestGazeFlow:
    def test_tracking_gate(self, blob_volume):
        engine = make_engine()
        q = engine.subscribe()
        engine.handle_client({"type": "load_image", "path": blob_volume})
        drain(q)
        engine.handle_client(
            {"type": "gaze_feed", "t_us": 0, "sx": 5.0, "sy": 5.0, "valid": 1}
        )
        assert drain(q) == []  # tracking off: dropped silently
        engine.handle_client({"type": "start_tracking"})
        engine.handle_client(
            {"type": "gaze_feed", "t_us": 100, "sx": 5.0, "sy": 5.0, "valid": 1}
        )
        assert [m["type"] for m in drain(q)] == ["gaze_cursor"]
        engine.handle_client({"type": "stop_tracking"})
        engine.handle_client(
            {"type": "gaze_feed", "t_us": 200, "sx": 5.0, "sy": 5.0, "valid": 1}
        )
        assert drain(q) == []
        engine.close()

    def test_gaze_cursor_counts_valid_accepted_samples(self, blob_volume):
        engine = make_engine()
        engine.handle_client({"type": "load_image", "path": blob_volume})
        engine.handle_client({"type": "start_tracking"})
        q = engine.subscribe()
        rng = np.random.Generator(np.random.PCG64(2))
        n_valid = 0
        for i in range(300):
            valid = bool(rng.random() > 0.2)
            n_valid += valid
            engine.ingest(
                GazeSample(i * STEP_US, ScreenPoint(float(rng.uniform(0, 128)), 5.0), valid)
            )
        cursors = [m for m in drain(q) if m["type"] == "gaze_cursor"]
        assert len(cursors) == n_valid
        engine.close()

    def test_fixation_broadcast_in_image_pixels(self, blob_volume):
        engine = make_engine(display_w=256, display_h=256)
        engine.handle_client({"type": "load_image", "path": blob_volume})
        engine.handle_client({"type": "start_tracking"})
        q = engine.subscribe()
        # display is 2x the 128px image: screen (120, 100) -> image (60, 50)
        feed(engine, dwell_samples(120.0, 100.0))
        feed(engine, dwell_samples(900.0, 900.0, t0=STEP_US * 40, n=2))
        fixations = [m for m in drain(q) if m["type"] == "fixation"]
        assert len(fixations) == 1
        assert (fixations[0]["ix"], fixations[0]["iy"]) == (60, 50)
        assert fixations[0]["n_samples"] == 12
        engine.close()

    def test_mask_updates_versions_increase(self, blob_volume):
        engine = make_engine()
        engine.handle_client({"type": "load_image", "path": blob_volume})
        engine.handle_client({"type": "start_tracking"})
        q = engine.subscribe()
        t0 = 0
        for spot in ((60, 50), (70, 60), (20, 20), (100, 40)):
            feed(engine, dwell_samples(*spot, t0=t0))
            t0 += STEP_US * 20
        updates = [m for m in drain(q) if m["type"] == "mask_update"]
        assert len(updates) >= 2
        versions = [u["version"] for u in updates]
        assert versions == sorted(set(versions))
        for u in updates:
            assert sum(u["rle"]) == u["iw"] * u["ih"]
        engine.close()

    def test_no_mask_update_before_first_prompt(self, blob_volume):
        engine = make_engine()
        q = engine.subscribe()
        engine.handle_client({"type": "load_image", "path": blob_volume})
        engine.handle_client({"type": "start_tracking"})
        feed(engine, dwell_samples(60, 50, n=3))  # too short for a fixation
        assert [m for m in drain(q) if m["type"] == "mask_update"] == []
        engine.close()

    def test_slice_change_clears_prompts_and_reprepares(self, blob_volume):
        engine = make_engine()
        engine.handle_client({"type": "load_image", "path": blob_volume})
        engine.handle_client({"type": "start_tracking"})
        feed(engine, dwell_samples(60, 50))
        feed(engine, dwell_samples(100, 100, t0=STEP_US * 40))
        assert engine.prompt().points
        engine.handle_client({"type": "set_slice", "z": 2})
        assert engine.prompt().points == ()
        assert engine.prompt().slice_index == 2
        # prompting continues to work on the new slice
        feed(engine, dwell_samples(80, 50, t0=STEP_US * 100))
        feed(engine, dwell_samples(10, 120, t0=STEP_US * 140))
        assert engine.final_masks  # produced against slice 2
        engine.close()

    def test_clear_resets_prompt_but_keeps_mask(self, blob_volume):
        engine = make_engine()
        engine.handle_client({"type": "load_image", "path": blob_volume})
        engine.handle_client({"type": "start_tracking"})
        feed(engine, dwell_samples(60, 50))
        feed(engine, dwell_samples(100, 100, t0=STEP_US * 40))
        rev_before = engine.prompt().revision
        engine.handle_client({"type": "clear"})
        assert engine.prompt().points == ()
        assert engine.prompt().revision == rev_before + 1
        assert engine._current is not None  # last mask still saveable
        engine.close()

    def test_nonmonotonic_gaze_feed_reports_error(self, blob_volume):
        engine = make_engine()
        engine.handle_client({"type": "load_image", "path": blob_volume})
        engine.handle_client({"type": "start_tracking"})
        engine.handle_client({"type": "gaze_feed", "t_us": 100, "sx": 1.0, "sy": 1.0})
        replies = engine.handle_client(
            {"type": "gaze_feed", "t_us": 50, "sx": 1.0, "sy": 1.0}
        )
        assert replies[0]["type"] == "error"
        engine.close()


class TestBroadcastLogConsistency:
    def test_client_stream_matches_session_log(self, blob_volume, tmp_path):
        from gazeseg.session import SessionRecorder, read_session

        session = str(tmp_path / "s.gss")
        config = EngineConfig(
            dispatch="sync", gaze_source="ui-mouse", session_out=session
        )
        engine = Engine(
            config,
            ReferenceBackend(),
            recorder=SessionRecorder(session),
            clock_us=(lambda c=itertools.count(0, 1000): next(c)),
        )
        q = engine.subscribe()
        engine.handle_client({"type": "load_image", "path": blob_volume})
        engine.handle_client({"type": "start_tracking"})
        feed(engine, dwell_samples(60, 50))
        feed(engine, dwell_samples(100, 100, t0=STEP_US * 40))
        feed(engine, dwell_samples(10, 120, t0=STEP_US * 80))
        feed(engine, dwell_samples(0, 0, t0=STEP_US * 120, n=1))
        engine.close()

        messages = drain(q)
        events = read_session(session)

        # every broadcast mask version appears in the log, same order
        broadcast_masks = [
            (m["version"], tuple(m["rle"])) for m in messages if m["type"] == "mask_update"
        ]
        logged_masks = [
            (e.payload["version"], tuple(e.payload["rle"]))
            for e in events
            if e.kind == "mask_produced"
        ]
        assert broadcast_masks == logged_masks
        assert len(broadcast_masks) >= 2

        # every cursor corresponds to a logged valid gaze event, same order
        cursors = [(m["t_us"], m["sx"], m["sy"]) for m in messages if m["type"] == "gaze_cursor"]
        logged_gaze = [
            (e.payload["t_us"], e.payload["sx"], e.payload["sy"])
            for e in events
            if e.kind == "gaze" and e.payload["valid"]
        ]
        assert cursors == logged_gaze


class TestGazePacer:
    def test_log_source_plays_once(self, blob_volume, tmp_path):
        from gazeseg.gaze import write_gaze_log
        from gazeseg.server import GazePacer, make_gaze_pacer

        # 2 ms sample spacing keeps the real-time pacing test fast
        samples = [
            GazeSample(i * 2000, ScreenPoint(60.0, 50.0)) for i in range(20)
        ]
        log = tmp_path / "gaze.log"
        write_gaze_log(samples, str(log))

        config = EngineConfig(dispatch="sync", gaze_source=f"log:{log}")
        engine = Engine(config, ReferenceBackend())
        engine.handle_client({"type": "load_image", "path": blob_volume})
        engine.handle_client({"type": "start_tracking"})
        q = engine.subscribe()
        pacer = make_gaze_pacer(engine, config)
        assert isinstance(pacer, GazePacer)
        pacer.start()
        pacer.join(10)
        assert not pacer.is_alive()
        cursors = [m for m in drain(q) if m["type"] == "gaze_cursor"]
        assert len(cursors) == len(samples)
        engine.close()

    def test_simulate_source_loops_with_increasing_time(self, tmp_path):
        from gazeseg.server import make_gaze_pacer

        scan = tmp_path / "scan.txt"
        scan.write_text("rate_hz=500\n10 10 20 0\n")  # fast virtual tracker
        config = EngineConfig(dispatch="sync", gaze_source=f"simulate:{scan}")
        engine = Engine(config, ReferenceBackend())
        engine.handle_client({"type": "start_tracking"})
        q = engine.subscribe()
        pacer = make_gaze_pacer(engine, config)
        pacer.start()
        time.sleep(0.25)
        pacer.stop()
        pacer.join(5)
        cursors = [m for m in drain(q) if m["type"] == "gaze_cursor"]
        # looped beyond one 10-sample pass, timestamps strictly increasing
        assert len(cursors) > 10
        times = [c["t_us"] for c in cursors]
        assert all(b > a for a, b in zip(times, times[1:]))
        engine.close()


class StalledBackend:
    """segment() blocks until released; prepare is instant."""

    def __init__(self):
        self.release = threading.Event()
        self.calls = 0

    def prepare(self, volume, slice_index):
        pass

    def segment(self, req):
        self.calls += 1
        self.release.wait(20)
        from gazeseg.volume import MaskSlice
        import numpy as np

        return SegmentResult(
            req.request_id,
            MaskSlice.from_array(np.zeros((2, 2), dtype=bool)),
            1.0,
            0.0,
        )

    def close(self):
        self.release.set()


class TestIngestNeverBlocks:
    def test_stalled_backend_does_not_drop_samples(self, blob_volume):
        backend = StalledBackend()
        config = EngineConfig(dispatch="coalesce", gaze_source="ui-mouse")
        engine = Engine(config, backend, clock_us=(lambda c=itertools.count(): next(c)))
        q = engine.subscribe()
        engine.handle_client({"type": "load_image", "path": blob_volume})
        engine.handle_client({"type": "start_tracking"})

        spec = ScanpathSpec(
            tuple(
                ScanpathTarget(ScreenPoint(20.0 + 15 * k, 30.0 + 10 * k), 400.0, 1.0)
                for k in range(6)
            ),
            transit_samples=3,
        )
        samples = simulate_scanpath(spec, 123)
        # a live stream never flushes; end it with one far sample so the
        # final dwell's run is broken like any other
        samples.append(
            GazeSample(samples[-1].t_us + STEP_US, ScreenPoint(2000.0, 2000.0))
        )
        t_start = time.perf_counter()
        per_sample = []
        for s in samples:
            t0 = time.perf_counter()
            engine.ingest(s)
            per_sample.append(time.perf_counter() - t0)
        elapsed = time.perf_counter() - t_start

        messages = drain(q)
        cursors = [m for m in messages if m["type"] == "gaze_cursor"]
        fixations = [m for m in messages if m["type"] == "fixation"]
        assert len(cursors) == len(samples)  # zero drops
        assert len(fixations) == 6  # every dwell detected
        p99 = sorted(per_sample)[int(len(per_sample) * 0.99)]
        assert p99 < 0.001, f"p99 ingest {p99 * 1e3:.3f} ms"
        assert elapsed < 5.0
        backend.release.set()
        engine.close()
