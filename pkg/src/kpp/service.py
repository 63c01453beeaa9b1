"""Mock cloud CIM: an HTTP job service backed by the local annealing engine.

Asynchronous submit/poll semantics under /v1, mirroring quantum-cloud APIs:

    POST /v1/ising/jobs            -> 202 {"id": ..., "state": "queued"}
    GET  /v1/ising/jobs/{id}       -> 200 {"id", "state", "result"?, "error"?}

Bearer-token auth (any non-empty token passes; this is a mock), idempotent
submission via the Idempotency-Key header, a bounded in-memory job store with
FIFO eviction, and an optional artificial queue delay.  Numbers travel as
JSON decimal text, which round-trips IEEE doubles exactly, so a remote result
is bit-identical to the local annealer's for the same (problem, params, seed).

Jobs advance queued -> running -> done | failed and never regress.  A request
labeled "__fail__" fails on purpose (test hook for client error paths).
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .errors import ConfigError, DomainError
from .ising import IsingProblem
from .samplers import AnnealSchedule, SampleSet, SamplerConfig, simulated_anneal

API_PREFIX = "/v1/ising/jobs"


@dataclass(frozen=True)
class ServiceConfig:
    capacity: int = 256
    workers: int = 4
    queue_delay_s: float = 0.0
    require_token: bool = True

    def __post_init__(self):
        if self.capacity < 1 or self.workers < 1 or self.queue_delay_s < 0:
            raise ConfigError("capacity >= 1, workers >= 1, queue_delay_s >= 0 required")


@dataclass
class JobRecord:
    id: str
    state: str = "queued"  # queued -> running -> done | failed
    submitted_at: float = 0.0
    finished_at: float | None = None
    result: SampleSet | None = None
    error: str | None = None
    label: str | None = None


class _BadRequest(Exception):
    pass


def parse_job_body(body: dict) -> tuple[IsingProblem, SamplerConfig, str | None]:
    """Validate and decode the wire body into (problem, config, label)."""
    try:
        n = int(body["n"])
        field_vec = [float(x) for x in body["field"]]
        coupling = {
            (int(i), int(j)): float(c) for i, j, c in body.get("coupling", [])
        }
        offset = float(body.get("offset", 0.0))
        params = dict(body.get("params", {}))
        seed = int(params["seed"])
        reads = int(params.get("reads", 2000))
        top_k = params.get("top_k", None)
        top_k = None if top_k is None else int(top_k)
        read_output = str(params.get("read_output", "best"))
    except (KeyError, TypeError, ValueError) as exc:
        raise _BadRequest(f"malformed request: {exc}") from exc
    if n < 1:
        raise _BadRequest("problem must have n >= 1")
    beta = params.get("beta")
    schedule_spec = params.get("schedule")
    if beta is not None and schedule_spec is not None:
        raise _BadRequest("beta and schedule are mutually exclusive")
    schedule = None
    try:
        if schedule_spec is not None:
            schedule = AnnealSchedule(**{k: v for k, v in schedule_spec.items()})
        elif beta is not None:
            # beta sets the effective sampling temperature: a constant-T ladder
            t = 1.0 / float(beta)
            schedule = AnnealSchedule(t_initial=t, t_final=t)
        problem = IsingProblem(n=n, field=field_vec, coupling=coupling, offset=offset)
        cfg = SamplerConfig(
            seed=seed, reads=reads, schedule=schedule, top_k=top_k, read_output=read_output
        )
    except (ConfigError, DomainError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise _BadRequest(f"invalid problem or params: {exc}") from exc
    label = body.get("label")
    return problem, cfg, None if label is None else str(label)


def sampleset_to_wire(s: SampleSet) -> dict:
    return {
        "entries": [
            [e.energy, e.multiplicity, "".join("+" if v > 0 else "-" for v in e.spins)]
            for e in s.entries
        ]
    }


class CimService:
    """In-process mock service; bind to port 0 to pick a free port."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, config: ServiceConfig = ServiceConfig()):
        self.config = config
        self._lock = threading.Lock()
        self._jobs: OrderedDict[str, JobRecord] = OrderedDict()
        self._idempotency: dict[str, str] = {}
        self._executor = ThreadPoolExecutor(max_workers=config.workers)
        service = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep test output quiet
                pass

            def _send(self, status: int, payload: dict):
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def _authorized(self) -> bool:
                if not service.config.require_token:
                    return True
                auth = self.headers.get("Authorization", "")
                return auth.startswith("Bearer ") and len(auth[7:].strip()) > 0

            def do_POST(self):
                if self.path.rstrip("/") != API_PREFIX:
                    self._send(404, {"error": "no such endpoint"})
                    return
                if not self._authorized():
                    self._send(401, {"error": "missing or empty bearer token"})
                    return
                length = int(self.headers.get("Content-Length", 0))
                try:
                    body = json.loads(self.rfile.read(length) or b"{}")
                    problem, cfg, label = parse_job_body(body)
                except (_BadRequest, json.JSONDecodeError) as exc:
                    self._send(400, {"error": str(exc)})
                    return
                key = self.headers.get("Idempotency-Key")
                job_id, state = service.submit(problem, cfg, label=label, idempotency_key=key)
                self._send(202, {"id": job_id, "state": state})

            def do_GET(self):
                if not self.path.startswith(API_PREFIX + "/"):
                    self._send(404, {"error": "no such endpoint"})
                    return
                if not self._authorized():
                    self._send(401, {"error": "missing or empty bearer token"})
                    return
                job_id = self.path[len(API_PREFIX) + 1 :].strip("/")
                record = service.get(job_id)
                if record is None:
                    self._send(404, {"error": "job not found"})
                    return
                payload = {"id": record.id, "state": record.state}
                if record.state == "done":
                    payload["result"] = sampleset_to_wire(record.result)
                if record.state == "failed":
                    payload["error"] = record.error
                self._send(200, payload)

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> "CimService":
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        self._executor.shutdown(wait=False)

    def __enter__(self) -> "CimService":
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    # -- job store ---------------------------------------------------------

    def submit(
        self,
        problem: IsingProblem,
        cfg: SamplerConfig,
        label: str | None = None,
        idempotency_key: str | None = None,
    ) -> tuple[str, str]:
        """Enqueue a job; returns (id, state snapshot at submission)."""
        with self._lock:
            if idempotency_key is not None:
                existing = self._idempotency.get(idempotency_key)
                if existing is not None and existing in self._jobs:
                    known = self._jobs[existing]
                    return known.id, known.state
            record = JobRecord(id=uuid.uuid4().hex, submitted_at=time.time(), label=label)
            self._jobs[record.id] = record
            if idempotency_key is not None:
                self._idempotency[idempotency_key] = record.id
            while len(self._jobs) > self.config.capacity:
                evicted_id, _ = self._jobs.popitem(last=False)
                self._idempotency = {
                    k: v for k, v in self._idempotency.items() if v != evicted_id
                }
        self._executor.submit(self._run, record.id, problem, cfg)
        return record.id, "queued"

    def get(self, job_id: str) -> JobRecord | None:
        with self._lock:
            return self._jobs.get(job_id)

    def _transition(self, job_id: str, state: str, **fields):
        with self._lock:
            record = self._jobs.get(job_id)
            if record is None:  # evicted while running
                return None
            record.state = state
            for name, value in fields.items():
                setattr(record, name, value)
            return record

    def _run(self, job_id: str, problem: IsingProblem, cfg: SamplerConfig):
        if self.config.queue_delay_s:
            time.sleep(self.config.queue_delay_s)
        record = self._transition(job_id, "running")
        if record is None:
            return
        try:
            if record.label == "__fail__":
                raise RuntimeError("injected failure (test hook)")
            result = simulated_anneal(problem, cfg)
        except Exception as exc:
            self._transition(job_id, "failed", error=str(exc), finished_at=time.time())
            return
        self._transition(job_id, "done", result=result, finished_at=time.time())


def serve(host: str, port: int, config: ServiceConfig = ServiceConfig()) -> CimService:
    """Start the mock service; returns the running instance."""
    return CimService(host=host, port=port, config=config).start()
