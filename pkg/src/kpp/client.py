"""Client for the CIM job service: submit, poll, and decode results.

Submission carries a client-generated Idempotency-Key, so retrying a POST
after a transport failure cannot double-enqueue a job.  Credentials come from
KPP_API_TOKEN and the service location from KPP_BASE_URL unless given
explicitly.
"""

from __future__ import annotations

import os
import time
import uuid
from dataclasses import dataclass, field

import requests

from .errors import AuthError, ConfigError, NetworkError, RemoteJobError
from .ising import IsingProblem
from .samplers import AnnealSchedule, SampleEntry, SampleSet, SamplerConfig

ENV_TOKEN = "KPP_API_TOKEN"
ENV_BASE_URL = "KPP_BASE_URL"


@dataclass(frozen=True)
class ClientConfig:
    base_url: str
    auth_token: str
    timeout: float = 10.0
    poll_interval: float = 0.05
    max_polls: int = 400
    retries: int = 3

    def __post_init__(self):
        if self.poll_interval <= 0 or self.max_polls < 1:
            raise ConfigError("poll_interval > 0 and max_polls >= 1 required")

    @classmethod
    def from_env(cls, **overrides) -> "ClientConfig":
        return cls(
            base_url=overrides.pop("base_url", os.environ.get(ENV_BASE_URL, "http://127.0.0.1:8000")),
            auth_token=overrides.pop("auth_token", os.environ.get(ENV_TOKEN, "")),
            **overrides,
        )


@dataclass(frozen=True)
class JobRequest:
    problem: IsingProblem
    config: SamplerConfig
    beta: float | None = None
    label: str | None = None
    request_key: str = field(default_factory=lambda: uuid.uuid4().hex)

    def wire_body(self) -> dict:
        params = {
            "reads": self.config.reads,
            "seed": self.config.seed,
            "top_k": self.config.top_k,
            "read_output": self.config.read_output,
        }
        if self.beta is not None:
            params["beta"] = self.beta
        elif self.config.schedule is not None:
            s = self.config.schedule
            params["schedule"] = {
                "t_initial": s.t_initial,
                "t_final": s.t_final,
                "decay": s.decay,
                "sweeps_per_stage": s.sweeps_per_stage,
            }
        body = {
            "n": self.problem.n,
            "field": [float(x) for x in self.problem.field],
            "coupling": [[i, j, c] for (i, j), c in sorted(self.problem.coupling.items())],
            "offset": self.problem.offset,
            "params": params,
        }
        if self.label is not None:
            body["label"] = self.label
        return body


def _headers(c: ClientConfig) -> dict:
    if not c.auth_token:
        raise AuthError(f"no auth token; set {ENV_TOKEN} or ClientConfig.auth_token")
    return {"Authorization": f"Bearer {c.auth_token}"}


def _check_auth(response):
    if response.status_code == 401:
        raise AuthError(response.json().get("error", "unauthorized"))


def submit_job(c: ClientConfig, r: JobRequest) -> str:
    """POST the job; idempotent retries; returns the server-assigned id."""
    headers = _headers(c) | {"Idempotency-Key": r.request_key}
    url = f"{c.base_url}/v1/ising/jobs"
    last_exc = None
    for _ in range(c.retries):
        try:
            response = requests.post(url, json=r.wire_body(), headers=headers, timeout=c.timeout)
        except requests.RequestException as exc:
            last_exc = exc
            continue
        _check_auth(response)
        if response.status_code == 400:
            raise ConfigError(response.json().get("error", "bad request"))
        if response.status_code != 202:
            raise RemoteJobError(f"unexpected status {response.status_code}")
        return response.json()["id"]
    raise NetworkError(f"submission failed after {c.retries} attempts: {last_exc}")


def await_result(c: ClientConfig, job_id: str) -> SampleSet:
    """Poll until done; decode the wire entries into a SampleSet."""
    url = f"{c.base_url}/v1/ising/jobs/{job_id}"
    headers = _headers(c)
    for poll in range(c.max_polls):
        try:
            response = requests.get(url, headers=headers, timeout=c.timeout)
        except requests.RequestException as exc:
            raise NetworkError(f"poll failed: {exc}") from exc
        _check_auth(response)
        if response.status_code == 404:
            raise RemoteJobError("job not found (expired or never submitted)")
        payload = response.json()
        state = payload.get("state")
        if state == "done":
            return _decode_sampleset(payload["result"])
        if state == "failed":
            raise RemoteJobError(payload.get("error", "remote job failed"))
        time.sleep(c.poll_interval)
    raise TimeoutError(f"job {job_id} not done after {c.max_polls} polls")


def _decode_sampleset(wire: dict) -> SampleSet:
    entries = []
    n = 0
    for energy, multiplicity, spins in wire["entries"]:
        n = len(spins)
        entries.append(
            SampleEntry(
                spins=tuple(1 if ch == "+" else -1 for ch in spins),
                energy=float(energy),
                multiplicity=int(multiplicity),
            )
        )
    return SampleSet(n=n, entries=tuple(entries))


def sample_remote(c: ClientConfig, p: IsingProblem, cfg: SamplerConfig, label: str | None = None) -> SampleSet:
    """Submit + await: the cim_remote backend."""
    job_id = submit_job(c, JobRequest(problem=p, config=cfg, label=label))
    return await_result(c, job_id)
