"""Local HTTP stepper service: drive a run interactively, one reply round and
one boundary at a time, over a JSON API.

Endpoints (field names are part of the contract):

  POST /session                 {"program": text, "state": text, "scenario": text?}
                                -> 201 {"id": ..., "status": {...}}
  GET  /session/{id}/status     -> 200 {"id", "step", "round", "phase",
                                        "verdict", "pending", "dueDeliveries",
                                        "registry", "state"}
  POST /session/{id}/round      {"replies": [{"query": "<...>", "value": lit}]}
  POST /session/{id}/boundary   {"deliveries": ["<...>", ...]}
  GET  /session/{id}/trace      -> 200 {"trace": text}

The service computes no semantics of its own: each session wraps the engine,
and rejected requests (non-pending query, undef reply to a persistent query,
non-due delivery) leave the session untouched.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .evaluator import EvalError
from .histories import HistoryError
from .parser import (
    ParseError,
    parse_program,
    parse_query_text,
    parse_scenario,
    parse_state,
    Scenario,
)
from .runtime import (
    PersistentRegistry,
    RuntimeFault,
    StepSession,
    Trace,
    deliver_late_replies,
)
from .structures import TRUE, Element, FALSE, UNDEF, lookup, apply_updates
from .syntax import desugar_reply_locations, validate_program


class ServiceError(Exception):
    def __init__(self, message: str, status: int = 400):
        super().__init__(message)
        self.status = status


def _parse_value(text: str) -> Element:
    text = text.strip()
    if text in ("true", "false", "undef"):
        return {"true": TRUE, "false": FALSE, "undef": UNDEF}[text]
    if text.startswith("'") and text.endswith("'") and len(text) >= 2:
        return Element("atom", text[1:-1])
    try:
        return Element("int", int(text))
    except ValueError:
        raise ServiceError(f"cannot parse value {text!r}")


class Session:
    """One interactive run.  Requests are serialized by a per-session lock."""

    def __init__(self, sid: str, program_text: str, state_text: str,
                 scenario_text: str | None):
        self.id = sid
        self.lock = threading.Lock()
        program = desugar_reply_locations(parse_program(program_text, "program"))
        errors = [d for d in validate_program(program) if d.severity == "error"]
        if errors:
            raise ServiceError("; ".join(d.render() for d in errors))
        self.program = program
        self.state = parse_state(state_text, program.vocabulary, "state")
        self.scenario: Scenario = (
            parse_scenario(scenario_text, "scenario") if scenario_text else Scenario(())
        )
        self.trace = Trace()
        self.registry = PersistentRegistry()
        self.consumed: set[int] = set()
        self.step_index = 1
        self.verdict: str | None = None
        self.session_step: StepSession | None = None
        self.boundary_written: set = set()
        self._begin_step()

    # phase: "round" while the step is open, "boundary" after it ended,
    # "done" after halt/failure.
    @property
    def phase(self) -> str:
        if self.verdict is not None:
            return "done"
        return "boundary" if self.session_step is None else "round"

    def _begin_step(self) -> None:
        self.session_step = StepSession(
            self.program, self.state, self.registry, self.step_index, self.trace
        )
        if self.session_step.final:
            self._finish_step()

    def _finish_step(self) -> None:
        result = self.session_step.finish()
        self.session_step = None
        if result.verdict == "fail":
            self.trace.failed()
            self.verdict = "failed"
            return
        self.state = apply_updates(self.state, result.updates)
        # On-time replies to persistent queries are written at the end of the
        # issuing step, before the operator touches the boundary.  The written
        # set is shared with the boundary call so same-boundary conflicts
        # resolve exactly as in scripted runs.
        self.boundary_written = set()
        self.state = deliver_late_replies(
            self.state, self.registry, Scenario(()), self.step_index,
            set(), self.trace, written=self.boundary_written,
        )

    def due_deliveries(self):
        return [
            d for d in self.scenario.due_after(self.step_index)
            if d.index not in self.consumed
        ]

    def post_round(self, replies_payload) -> None:
        if self.phase != "round":
            raise ServiceError(f"session is not awaiting a round (phase {self.phase})")
        if not isinstance(replies_payload, list) or not replies_payload:
            raise ServiceError("replies must be a non-empty list")
        replies = {}
        for item in replies_payload:
            try:
                query = parse_query_text(item["query"])
            except (KeyError, TypeError):
                raise ServiceError("each reply needs query and value fields")
            except ParseError as exc:
                raise ServiceError(str(exc))
            value = _parse_value(str(item.get("value")))
            replies[query] = value
        # Validate the whole round before touching the step, so a rejected
        # request cannot desynchronize the session.
        pending = self.session_step.pending
        for q, v in replies.items():
            if q not in pending:
                raise ServiceError(f"{q.render()} is not pending")
            if v == UNDEF and self.registry.has_awaiting(q):
                raise ServiceError(
                    f"reply to persistent query {q.render()} must not be undef"
                )
        try:
            self.session_step.add_round(replies)
        except (RuntimeFault, HistoryError, EvalError) as exc:
            raise ServiceError(str(exc))
        if self.session_step.final:
            self._finish_step()

    def post_boundary(self, deliveries_payload) -> None:
        if self.phase != "boundary":
            raise ServiceError(f"session is not at a boundary (phase {self.phase})")
        if not isinstance(deliveries_payload, list):
            raise ServiceError("deliveries must be a list of query literals")
        due = {d.query: d for d in self.due_deliveries()}
        selected = []
        for text in deliveries_payload:
            try:
                query = parse_query_text(str(text))
            except ParseError as exc:
                raise ServiceError(str(exc))
            if query not in due:
                raise ServiceError(f"{query.render()} is not due at this boundary")
            selected.append(due[query])
        selected.sort(key=lambda d: d.index)  # scenario order is the tie-break
        try:
            self.state = deliver_late_replies(
                self.state, self.registry, self.scenario, self.step_index,
                self.consumed, self.trace, selected=selected,
                written=self.boundary_written,
            )
        except RuntimeFault as exc:
            raise ServiceError(str(exc))
        for d in selected:
            self.consumed.add(d.index)
        if lookup(self.state, "Halt", ()) == TRUE:
            self.trace.halted()
            self.verdict = "halted"
            return
        self.step_index += 1
        self._begin_step()

    def status(self) -> dict:
        pending = []
        rounds = 0
        if self.session_step is not None:
            pending = sorted(q.render() for q in self.session_step.pending)
            rounds = len(self.session_step.history.rounds)
        return {
            "id": self.id,
            "step": self.step_index,
            "round": rounds,
            "phase": self.phase,
            "verdict": self.verdict,
            "pending": pending,
            "dueDeliveries": sorted(d.query.render() for d in self.due_deliveries())
            if self.phase == "boundary" else [],
            "registry": self.registry.snapshot(),
            "state": self.state.dump(),
        }


class ServiceState:
    def __init__(self) -> None:
        self.sessions: dict[str, Session] = {}
        self.lock = threading.Lock()
        self.counter = 0

    def create(self, payload: dict) -> Session:
        if not isinstance(payload, dict) or "program" not in payload or "state" not in payload:
            raise ServiceError("body must carry program and state")
        with self.lock:
            self.counter += 1
            sid = f"s{self.counter}"
        try:
            session = Session(sid, payload["program"], payload["state"],
                              payload.get("scenario"))
        except (ParseError, RuntimeFault, HistoryError, EvalError) as exc:
            raise ServiceError(str(exc))
        with self.lock:
            self.sessions[sid] = session
        return session

    def get(self, sid: str) -> Session:
        with self.lock:
            session = self.sessions.get(sid)
        if session is None:
            raise ServiceError(f"unknown session {sid}", status=404)
        return session


def make_handler(service: ServiceState):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # silence default stderr chatter
            pass

        def _send(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b"{}"
            try:
                return json.loads(raw or b"{}")
            except json.JSONDecodeError:
                raise ServiceError("request body is not valid JSON")

        def do_POST(self):
            try:
                if self.path == "/session":
                    session = service.create(self._body())
                    with session.lock:
                        self._send(201, {"id": session.id, "status": session.status()})
                    return
                parts = self.path.strip("/").split("/")
                if len(parts) == 3 and parts[0] == "session":
                    session = service.get(parts[1])
                    body = self._body()
                    with session.lock:
                        if parts[2] == "round":
                            session.post_round(body.get("replies"))
                        elif parts[2] == "boundary":
                            session.post_boundary(body.get("deliveries", []))
                        else:
                            raise ServiceError("unknown endpoint", status=404)
                        self._send(200, {"status": session.status()})
                    return
                raise ServiceError("unknown endpoint", status=404)
            except ServiceError as exc:
                self._send(exc.status, {"error": str(exc)})

        def do_GET(self):
            try:
                parts = self.path.strip("/").split("/")
                if len(parts) == 3 and parts[0] == "session":
                    session = service.get(parts[1])
                    with session.lock:
                        if parts[2] == "status":
                            self._send(200, session.status())
                        elif parts[2] == "trace":
                            self._send(200, {"trace": session.trace.render()})
                        else:
                            raise ServiceError("unknown endpoint", status=404)
                    return
                raise ServiceError("unknown endpoint", status=404)
            except ServiceError as exc:
                self._send(exc.status, {"error": str(exc)})

    return Handler


def start_server(host: str = "127.0.0.1", port: int = 0):
    """Start the stepper service on a background thread; returns the server
    (whose .server_address carries the bound port)."""
    service = ServiceState()
    server = ThreadingHTTPServer((host, port), make_handler(service))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def serve_forever(host: str, port: int) -> None:
    service = ServiceState()
    server = ThreadingHTTPServer((host, port), make_handler(service))
    print(f"stepper service listening on http://{host}:{server.server_address[1]}",
          flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
