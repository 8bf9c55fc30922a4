"""Network front for the engine.

The client channel is a WebSocket carrying one JSON object per message;
the external gaze feed is a plain TCP listener accepting gaze-log lines
(``t_us sx sy valid``). Simulated and logged gaze sources run on a
pacing thread that sleeps out the recorded inter-sample gaps.
"""

from __future__ import annotations

import asyncio
import json
import threading

from websockets.asyncio.server import serve as ws_serve

from .engine import Engine, EngineConfig
from .gaze import GazeSample, parse_gaze_line, read_gaze_log, read_scanpath, simulate_scanpath


class GazePacer(threading.Thread):
    """Replays a sample list into the engine at recorded pace.

    With ``loop=True`` the stream restarts after each pass, timestamps
    shifted so monotonicity holds: a stand-in for an endless tracker.
    """

    def __init__(self, engine: Engine, samples: list[GazeSample], loop: bool = False):
        super().__init__(name="gaze-pacer", daemon=True)
        self.engine = engine
        self.samples = samples
        self.loop = loop
        self._halt = threading.Event()

    def stop(self) -> None:
        self._halt.set()

    def run(self) -> None:
        if not self.samples:
            return
        offset = 0
        span = self.samples[-1].t_us - self.samples[0].t_us
        step = span // max(len(self.samples) - 1, 1) or 16_667
        while not self._halt.is_set():
            prev_t: int | None = None
            for s in self.samples:
                if self._halt.is_set():
                    return
                if prev_t is not None:
                    self._halt.wait((s.t_us - prev_t) / 1e6)
                prev_t = s.t_us
                self.engine.ingest(
                    GazeSample(s.t_us + offset, s.point, s.valid)
                )
            if not self.loop:
                return
            offset += span + step


def make_gaze_pacer(engine: Engine, config: EngineConfig, seed: int = 0) -> GazePacer | None:
    """Build the pacing thread for simulate:/log: sources, if configured."""
    source = config.gaze_source
    if source.startswith("simulate:"):
        spec = read_scanpath(source.split(":", 1)[1])
        return GazePacer(engine, simulate_scanpath(spec, seed), loop=True)
    if source.startswith("log:"):
        return GazePacer(engine, read_gaze_log(source.split(":", 1)[1]), loop=False)
    return None


async def serve(engine: Engine, config: EngineConfig, ready: asyncio.Event | None = None) -> None:
    """Run the WebSocket channel (and TCP feed when configured) forever."""
    loop = asyncio.get_running_loop()

    async def handler(websocket) -> None:
        outbox: asyncio.Queue = asyncio.Queue()

        def listener(message: dict) -> None:
            loop.call_soon_threadsafe(outbox.put_nowait, message)

        async def pump() -> None:
            while True:
                message = await outbox.get()
                await websocket.send(json.dumps(message))

        engine.add_listener(listener)
        meta = engine.current_meta()
        if meta is not None:
            await websocket.send(json.dumps(meta))
        sender = asyncio.create_task(pump())
        try:
            async for raw in websocket:
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await websocket.send(
                        json.dumps({"type": "error", "message": "message is not JSON"})
                    )
                    continue
                replies = await loop.run_in_executor(None, engine.handle_client, msg)
                for reply in replies:
                    await websocket.send(json.dumps(reply))
        finally:
            engine.remove_listener(listener)
            sender.cancel()

    async def feed_connection(reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        try:
            while True:
                raw = await reader.readline()
                if not raw:
                    break
                text = raw.decode("ascii", errors="replace").strip()
                if not text:
                    continue
                try:
                    sample = parse_gaze_line(text)
                except ValueError:
                    continue
                await loop.run_in_executor(None, engine.ingest, sample)
        finally:
            writer.close()

    feed_server = None
    if config.gaze_source == "feed":
        feed_port = config.feed_port or config.port + 1
        feed_server = await asyncio.start_server(feed_connection, "127.0.0.1", feed_port)

    async with ws_serve(handler, "127.0.0.1", config.port):
        if ready is not None:
            ready.set()
        print(f"gazeseg serving ws://127.0.0.1:{config.port}", flush=True)
        if feed_server is not None:
            print(
                f"gaze feed listening on tcp://127.0.0.1:{config.feed_port or config.port + 1}",
                flush=True,
            )
        await asyncio.Future()
