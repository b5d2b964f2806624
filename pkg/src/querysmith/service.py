"""HTTP session service for human-in-the-loop relevance feedback.

A session holds a growing prototype document and a label budget. Each
round the query optimizer runs against the configured engine, the round's
retrievals are ranked by relevance error, and the top unlabeled batch is
served for labeling. Labels expand the prototype and schedule the next
round. Sessions persist as append-only JSON-lines event logs and are
replayed on load, so a service restart loses nothing.
"""

from __future__ import annotations

import logging
import secrets
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal

import json

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .embeddings import EmbeddingStore
from .harness import (
    LABEL_RELEVANT,
    FeedbackParams,
    FeedbackSession,
    MODE_IQS_LOOP,
    RecordingEngine,
    Topic,
    _spawn_seed,
    expand_prototype,
)
from .optimizer import IqsParams, QueryQueue, iqs_run
from .relevance import ResultDoc, build_result_doc, rank_by_re
from .search import SearchEngine
from .textprep import EmptyPrototypeError, TokenizerConfig, build_prototype

log = logging.getLogger(__name__)

STATUS_ACTIVE = "active"
STATUS_BUDGET_EXHAUSTED = "budget_exhausted"
STATUS_COMPLETED = "completed"
STATUS_FAILED = "failed"


class ApiError(Exception):
    """An error surfaced to clients as ``{"error", "detail", "fields"?}``."""

    def __init__(self, status_code: int, error: str, detail: str, fields: list[str] | None = None):
        super().__init__(detail)
        self.status_code = status_code
        self.error = error
        self.detail = detail
        self.fields = fields


# ---------------------------------------------------------------------------
# Wire models
# ---------------------------------------------------------------------------


class IqsParamsModel(BaseModel):
    itr: int = 15
    runs: int = 3
    minq: int = 1
    maxq: int = 6
    rlimit: int = 20
    num_queries: int = 40
    seed: int | None = None

    def to_params(self) -> IqsParams:
        try:
            return IqsParams(
                itr=self.itr,
                runs=self.runs,
                minq=self.minq,
                maxq=self.maxq,
                rlimit=self.rlimit,
                num_queries=self.num_queries,
                seed=self.seed,
            )
        except ValueError as exc:
            raise ApiError(400, "validation_error", str(exc), fields=["params"]) from None


class CreateSessionRequest(BaseModel):
    prototype_text: str | None = None
    topic_ref: str | None = None
    engine: str = "default"
    params: IqsParamsModel = Field(default_factory=IqsParamsModel)
    label_budget: int = 300
    batch_size: int = 10
    expansions: list[str] = Field(default_factory=list)
    knn_k: int = 3


class CreateSessionResponse(BaseModel):
    session_id: str


class BatchItem(BaseModel):
    doc_id: str
    text: str
    score: float
    rank: int


class BatchResponse(BaseModel):
    round: int
    status: str
    batch: list[BatchItem]


class LabelItem(BaseModel):
    doc_id: str
    label: Literal["relevant", "irrelevant", "unknown"]


class SubmitLabelsRequest(BaseModel):
    labels: list[LabelItem]


class QueueEntryModel(BaseModel):
    terms: list[str]
    mre: float


class StatusResponse(BaseModel):
    status: str
    labels_used: int
    budget: int
    best_mre: float | None
    queue: list[QueueEntryModel]


class SubmitLabelsResponse(StatusResponse):
    mre_trajectory: list[float]


class ExportDoc(BaseModel):
    id: str
    text: str
    timestamp: int | None = None


class ExportResponse(BaseModel):
    status: str
    queries: list[QueueEntryModel]
    docs: list[ExportDoc]
    labels: dict[str, str]


# ---------------------------------------------------------------------------
# Session state and persistence
# ---------------------------------------------------------------------------


@dataclass
class ServiceRuntime:
    """Everything the service needs to run sessions."""

    store: EmbeddingStore
    config: TokenizerConfig
    engines: dict[str, SearchEngine]
    sessions_dir: Path
    topics: dict[str, Topic] = field(default_factory=dict)


@dataclass
class SessionState:
    session_id: str
    session: FeedbackSession
    iqs_params: IqsParams
    engine_ref: str
    created_at: float
    updated_at: float
    status: str = STATUS_ACTIVE
    next_round: int = 0
    current_batch: list[tuple[ResultDoc, float]] | None = None
    queue: QueryQueue = field(default_factory=lambda: QueryQueue(40))
    mre_trajectory: list[float] = field(default_factory=list)
    presented_docs: dict[str, ResultDoc] = field(default_factory=dict)

    @property
    def best_mre(self) -> float | None:
        best = self.queue.best()
        return None if best is None else best[1]


class SessionManager:
    """Owns session state, serialization per session, and the event log."""

    def __init__(self, runtime: ServiceRuntime) -> None:
        self.runtime = runtime
        runtime.sessions_dir.mkdir(parents=True, exist_ok=True)
        self._states: dict[str, SessionState] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    # -- persistence --------------------------------------------------------

    def _log_path(self, session_id: str) -> Path:
        return self.runtime.sessions_dir / f"{session_id}.jsonl"

    def _append_event(self, session_id: str, event: dict) -> None:
        with self._log_path(session_id).open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def _replay(self, session_id: str) -> SessionState | None:
        path = self._log_path(session_id)
        if not path.exists():
            return None
        events = []
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    events.append(json.loads(line))
        if not events or events[0].get("event") != "create":
            raise ApiError(500, "corrupt_session", f"session log {path} is unreadable")
        create = events[0]
        runtime = self.runtime
        params = FeedbackParams(
            label_budget=int(create["label_budget"]),
            batch_size=int(create["batch_size"]),
            expansions=frozenset(create.get("expansions", [])),
            knn_k=int(create.get("knn_k", 3)),
        )
        topic = Topic(id=create.get("topic_id", session_id), query=create["prototype_text"])
        prototype = build_prototype(
            create["prototype_text"], runtime.config, runtime.store,
            expansions=params.expansions, knn_k=params.knn_k,
        )
        session = FeedbackSession(
            topic=topic, prototype=prototype, config=runtime.config, store=runtime.store,
            params=params, mode=MODE_IQS_LOOP,
        )
        iqs = create["iqs"]
        state = SessionState(
            session_id=session_id,
            session=session,
            iqs_params=IqsParams(**iqs),
            engine_ref=create["engine"],
            created_at=float(create["created_at"]),
            updated_at=float(create["created_at"]),
            queue=QueryQueue(int(iqs["num_queries"])),
        )
        for event in events[1:]:
            kind = event.get("event")
            if kind == "batch":
                docs: list[tuple[ResultDoc, float]] = []
                for item in event["docs"]:
                    doc = build_result_doc(
                        item["doc_id"], item["text"], runtime.config, runtime.store,
                        item.get("timestamp"),
                    )
                    docs.append((doc, float(item["score"])))
                    session.presented.add(doc.id)
                    session.presentation_order.append(doc.id)
                    state.presented_docs[doc.id] = doc
                for terms, mre in event["queue"]:
                    state.queue.add(frozenset(terms), float(mre))
                if event.get("best_mre") is not None:
                    state.mre_trajectory.append(float(event["best_mre"]))
                state.current_batch = docs
                state.next_round = int(event["round"]) + 1
                if not docs:
                    state.status = STATUS_COMPLETED
            elif kind == "label":
                batch_docs = {d.id: d for d, _ in (state.current_batch or [])}
                relevant: list[ResultDoc] = []
                for doc_id, label in event["labels"]:
                    session.labeled[doc_id] = label
                    if label == LABEL_RELEVANT and doc_id in batch_docs:
                        relevant.append(batch_docs[doc_id])
                expand_prototype(session, relevant)
                state.current_batch = None
            elif kind == "failed":
                state.status = STATUS_FAILED
        if state.status == STATUS_ACTIVE and session.budget_remaining <= 0:
            state.status = STATUS_BUDGET_EXHAUSTED
        return state

    # -- helpers -------------------------------------------------------------

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def _get_state(self, session_id: str) -> SessionState:
        with self._registry_lock:
            state = self._states.get(session_id)
        if state is None:
            state = self._replay(session_id)
            if state is None:
                raise ApiError(404, "not_found", f"unknown session: {session_id}")
            with self._registry_lock:
                state = self._states.setdefault(session_id, state)
        return state

    # -- operations ----------------------------------------------------------

    def create(self, request: CreateSessionRequest) -> str:
        runtime = self.runtime
        given = [name for name, value in
                 (("prototype_text", request.prototype_text), ("topic_ref", request.topic_ref))
                 if value]
        if len(given) != 1:
            raise ApiError(
                400, "validation_error",
                "exactly one of prototype_text or topic_ref is required",
                fields=["prototype_text", "topic_ref"],
            )
        if request.engine not in runtime.engines:
            raise ApiError(400, "validation_error",
                           f"unknown engine ref: {request.engine!r}", fields=["engine"])
        if request.label_budget < 1:
            raise ApiError(400, "validation_error", "label_budget must be >= 1", fields=["label_budget"])
        if request.batch_size < 1:
            raise ApiError(400, "validation_error", "batch_size must be >= 1", fields=["batch_size"])
        unknown = set(request.expansions) - {"synonyms", "knn"}
        if unknown:
            raise ApiError(400, "validation_error",
                           f"unknown expansion kind(s): {sorted(unknown)}", fields=["expansions"])
        if request.topic_ref is not None:
            topic = runtime.topics.get(request.topic_ref)
            if topic is None:
                raise ApiError(400, "validation_error",
                               f"unknown topic ref: {request.topic_ref!r}", fields=["topic_ref"])
            prototype_text = topic.query
            topic_id = topic.id
        else:
            prototype_text = request.prototype_text or ""
            topic_id = None
        iqs_params = request.params.to_params()
        if iqs_params.seed is None:
            # Pin a seed at creation so replay and restarts are deterministic.
            iqs_params = replace(iqs_params, seed=secrets.randbits(32))
        params = FeedbackParams(
            label_budget=request.label_budget,
            batch_size=request.batch_size,
            expansions=frozenset(request.expansions),
            knn_k=request.knn_k,
        )
        try:
            prototype = build_prototype(
                prototype_text, runtime.config, runtime.store,
                expansions=params.expansions, knn_k=params.knn_k,
            )
        except EmptyPrototypeError as exc:
            raise ApiError(400, "validation_error", str(exc), fields=["prototype_text"]) from None

        session_id = secrets.token_hex(16)
        topic = Topic(id=topic_id or session_id, query=prototype_text)
        session = FeedbackSession(
            topic=topic, prototype=prototype, config=runtime.config, store=runtime.store,
            params=params, mode=MODE_IQS_LOOP,
        )
        now = time.time()
        state = SessionState(
            session_id=session_id,
            session=session,
            iqs_params=iqs_params,
            engine_ref=request.engine,
            created_at=now,
            updated_at=now,
            queue=QueryQueue(iqs_params.num_queries),
        )
        with self._registry_lock:
            self._states[session_id] = state
        self._append_event(session_id, {
            "event": "create",
            "session_id": session_id,
            "created_at": now,
            "prototype_text": prototype_text,
            "topic_id": topic.id,
            "engine": request.engine,
            "iqs": {
                "itr": iqs_params.itr, "runs": iqs_params.runs,
                "minq": iqs_params.minq, "maxq": iqs_params.maxq,
                "rlimit": iqs_params.rlimit, "num_queries": iqs_params.num_queries,
                "seed": iqs_params.seed,
            },
            "label_budget": params.label_budget,
            "batch_size": params.batch_size,
            "expansions": sorted(params.expansions),
            "knn_k": params.knn_k,
        })
        return session_id

    def _compute_batch(self, state: SessionState) -> None:
        """Run one optimizer round and stage the next unlabeled batch."""
        session = state.session
        engine = self.runtime.engines[state.engine_ref]
        recorder = RecordingEngine(engine)
        round_index = state.next_round
        run_params = replace(state.iqs_params, seed=_spawn_seed(state.iqs_params.seed, round_index))
        try:
            queue, _trace = iqs_run(session.prototype, recorder, run_params, self.runtime.store)
        except Exception as exc:  # engine misconfiguration, hard failure
            log.exception("session %s: round %d failed", state.session_id, round_index)
            state.status = STATUS_FAILED
            self._append_event(state.session_id, {"event": "failed", "detail": str(exc)})
            return
        for query, mre in queue:
            state.queue.add(query, mre)
        ranked = rank_by_re(
            [d for d in recorder.captured if d.id not in session.presented],
            session.prototype,
            self.runtime.store,
        )
        take = min(session.params.batch_size, session.budget_remaining)
        batch = [(s.doc, s.score) for s in ranked[:take]]
        for doc, _score in batch:
            session.presented.add(doc.id)
            session.presentation_order.append(doc.id)
            state.presented_docs[doc.id] = doc
        state.current_batch = batch
        state.next_round = round_index + 1
        best = state.best_mre
        if best is not None:
            state.mre_trajectory.append(best)
        if not batch:
            state.status = STATUS_COMPLETED
        self._append_event(state.session_id, {
            "event": "batch",
            "round": round_index,
            "docs": [
                {"doc_id": d.id, "text": d.text, "timestamp": d.timestamp, "score": score}
                for d, score in batch
            ],
            "queue": [[list(terms), mre] for terms, mre in state.queue.snapshot()],
            "best_mre": best,
        })

    def next_batch(self, session_id: str) -> BatchResponse:
        with self._lock_for(session_id):
            state = self._get_state(session_id)
            if state.status in (STATUS_BUDGET_EXHAUSTED, STATUS_COMPLETED, STATUS_FAILED):
                return BatchResponse(round=state.next_round, status=state.status, batch=[])
            if state.current_batch is None:
                self._compute_batch(state)
                state.updated_at = time.time()
            if state.current_batch is None:  # round failed
                return BatchResponse(round=state.next_round, status=state.status, batch=[])
            items = [
                BatchItem(doc_id=doc.id, text=doc.text, score=score, rank=rank)
                for rank, (doc, score) in enumerate(state.current_batch, start=1)
            ]
            return BatchResponse(round=max(state.next_round - 1, 0), status=state.status, batch=items)

    def submit_labels(self, session_id: str, request: SubmitLabelsRequest) -> SubmitLabelsResponse:
        with self._lock_for(session_id):
            state = self._get_state(session_id)
            session = state.session
            if state.status != STATUS_ACTIVE:
                raise ApiError(400, "invalid_state",
                               f"session is {state.status}; labels are not accepted")
            if not request.labels:
                raise ApiError(400, "validation_error", "labels must be non-empty", fields=["labels"])
            if state.current_batch is None:
                raise ApiError(400, "no_batch", "no batch is pending; fetch a batch first")
            batch_ids = {doc.id for doc, _ in state.current_batch}
            offending: list[str] = []
            submitted: set[str] = set()
            for item in request.labels:
                if (
                    item.doc_id not in batch_ids
                    or item.doc_id in session.labeled
                    or item.doc_id in submitted
                ):
                    offending.append(item.doc_id)
                submitted.add(item.doc_id)
            if offending:
                # Atomic: reject the whole request, session state unchanged.
                raise ApiError(
                    400, "invalid_labels",
                    "labels rejected: not in the presented batch, already labeled, or duplicated",
                    fields=offending,
                )
            batch_docs = {doc.id: doc for doc, _ in state.current_batch}
            relevant: list[ResultDoc] = []
            for item in request.labels:
                session.labeled[item.doc_id] = item.label
                if item.label == LABEL_RELEVANT:
                    relevant.append(batch_docs[item.doc_id])
            expand_prototype(session, relevant)
            state.current_batch = None
            if session.budget_remaining <= 0:
                state.status = STATUS_BUDGET_EXHAUSTED
            state.updated_at = time.time()
            self._append_event(session_id, {
                "event": "label",
                "labels": [[item.doc_id, item.label] for item in request.labels],
            })
            return SubmitLabelsResponse(
                status=state.status,
                labels_used=session.labels_used,
                budget=session.params.label_budget,
                best_mre=state.best_mre,
                queue=_queue_models(state.queue),
                mre_trajectory=list(state.mre_trajectory),
            )

    def status(self, session_id: str) -> StatusResponse:
        with self._lock_for(session_id):
            state = self._get_state(session_id)
            return StatusResponse(
                status=state.status,
                labels_used=state.session.labels_used,
                budget=state.session.params.label_budget,
                best_mre=state.best_mre,
                queue=_queue_models(state.queue),
            )

    def export(self, session_id: str) -> ExportResponse:
        with self._lock_for(session_id):
            state = self._get_state(session_id)
            docs = [
                ExportDoc(id=doc.id, text=doc.text, timestamp=doc.timestamp)
                for doc in state.presented_docs.values()
            ]
            return ExportResponse(
                status=state.status,
                queries=_queue_models(state.queue),
                docs=docs,
                labels=dict(state.session.labeled),
            )


def _queue_models(queue: QueryQueue) -> list[QueueEntryModel]:
    return [QueueEntryModel(terms=list(terms), mre=mre) for terms, mre in queue.snapshot()]


# ---------------------------------------------------------------------------
# App factory
# ---------------------------------------------------------------------------


def create_app(runtime: ServiceRuntime) -> FastAPI:
    app = FastAPI(title="querysmith session service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    manager = SessionManager(runtime)
    app.state.manager = manager

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError) -> JSONResponse:
        body: dict = {"error": exc.error, "detail": exc.detail}
        if exc.fields:
            body["fields"] = exc.fields
        return JSONResponse(status_code=exc.status_code, content=body)

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_request: Request, exc: RequestValidationError) -> JSONResponse:
        fields = sorted({".".join(str(p) for p in err["loc"] if p != "body") for err in exc.errors()})
        return JSONResponse(
            status_code=400,
            content={"error": "validation_error", "detail": "invalid request body", "fields": fields},
        )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "engines": sorted(runtime.engines)}

    @app.post("/sessions", response_model=CreateSessionResponse, status_code=201)
    def create_session(request: CreateSessionRequest) -> CreateSessionResponse:
        return CreateSessionResponse(session_id=manager.create(request))

    @app.get("/sessions/{session_id}/batch", response_model=BatchResponse)
    def next_batch(session_id: str) -> BatchResponse:
        return manager.next_batch(session_id)

    @app.post("/sessions/{session_id}/labels", response_model=SubmitLabelsResponse)
    def submit_labels(session_id: str, request: SubmitLabelsRequest) -> SubmitLabelsResponse:
        return manager.submit_labels(session_id, request)

    @app.get("/sessions/{session_id}/status", response_model=StatusResponse)
    def session_status(session_id: str) -> StatusResponse:
        return manager.status(session_id)

    @app.get("/sessions/{session_id}/export", response_model=ExportResponse)
    def export_results(session_id: str) -> ExportResponse:
        return manager.export(session_id)

    return app
