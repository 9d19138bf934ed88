"""Stateful learner sessions and a synchronous experiment endpoint.

A session owns one expanding graph, its signal and one learner. Clients
alternate ``predict`` (send the attachment of the next node) and
``reveal`` (send its true value); the node is attached after the reveal.
"""
from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from fastapi import FastAPI, HTTPException

from .. import experiments as ex
from ..baselines import ridge_solve
from ..filtering import build_shifted_matrix, design_row, frequency_response
from ..graph import AttachmentVector, ExpandingGraph, GraphError, normalize
from ..online import (DivergenceError, OnlineLearnerConfig, OnlineLearnerState, predict, reveal,
                      static_regret)
from . import schemas


@dataclass
class Session:
    graph: ExpandingGraph
    signal: np.ndarray
    config: OnlineLearnerConfig
    state: OnlineLearnerState
    attachment: AttachmentVector | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def info(self, sid: str) -> schemas.SessionInfo:
        losses = self.state.loss_history
        return schemas.SessionInfo(
            session_id=sid, n_nodes=self.graph.n, n_edges=self.graph.m, step=self.state.step,
            taps=self.state.h.tolist(), scale=self.graph.scale,
            mean_loss=float(np.mean(losses)) if losses else None,
            pending=self.attachment is not None)


def create_app() -> FastAPI:
    app = FastAPI(title="expanding-gf", version="0.1.0")
    sessions: dict[str, Session] = {}

    def get(sid: str) -> Session:
        try:
            return sessions[sid]
        except KeyError:
            raise HTTPException(404, f"no session {sid}") from None

    @app.get("/health")
    def health():
        return {"status": "ok", "sessions": len(sessions)}

    @app.post("/sessions", response_model=schemas.SessionInfo, status_code=201)
    def create_session(req: schemas.SessionCreate):
        if len(req.signal) != req.n_nodes:
            raise HTTPException(422, "signal length must equal n_nodes")
        try:
            dst = [e.dst for e in req.edges]
            src = [e.src for e in req.edges]
            A = sp.coo_matrix(([e.weight for e in req.edges], (dst, src)),
                              shape=(req.n_nodes, req.n_nodes))
            g = ExpandingGraph(A)
            if req.normalize and g.m:
                g = normalize(g)
            cfg = OnlineLearnerConfig(req.eta, req.mu, req.K, req.projection_radius)
        except (ValueError, GraphError) as exc:
            raise HTTPException(422, str(exc)) from None
        sid = uuid.uuid4().hex
        sessions[sid] = Session(g, np.asarray(req.signal, dtype=float), cfg,
                                OnlineLearnerState.initial(cfg))
        return sessions[sid].info(sid)

    @app.get("/sessions/{sid}", response_model=schemas.SessionInfo)
    def session_state(sid: str):
        return get(sid).info(sid)

    @app.delete("/sessions/{sid}", status_code=204)
    def delete_session(sid: str):
        get(sid)
        del sessions[sid]

    @app.post("/sessions/{sid}/predict", response_model=schemas.Prediction)
    def session_predict(sid: str, req: schemas.Attachment):
        s = get(sid)
        with s.lock:
            if s.attachment is not None:
                raise HTTPException(409, "a prediction is already pending")
            try:
                a = AttachmentVector(s.graph.n, req.indices, req.weights)
            except (ValueError, GraphError) as exc:
                raise HTTPException(422, str(exc)) from None
            Ax = build_shifted_matrix(s.graph, s.signal, s.config.K)
            y = predict(s.state, design_row(a, Ax))
            s.attachment = a
            return schemas.Prediction(step=s.state.step + 1, prediction=y)

    @app.post("/sessions/{sid}/reveal", response_model=schemas.RevealResult)
    def session_reveal(sid: str, req: schemas.Reveal):
        s = get(sid)
        with s.lock:
            if s.attachment is None:
                raise HTTPException(409, "reveal before predict")
            try:
                loss = reveal(s.state, s.config, req.x_true)
            except DivergenceError as exc:
                s.attachment = None
                raise HTTPException(422, str(exc)) from None
            s.graph.attach_node(s.attachment)
            s.signal = np.append(s.signal, req.x_true)
            s.attachment = None
            return schemas.RevealResult(step=s.state.step, loss=loss, taps=s.state.h.tolist(),
                                        n_nodes=s.graph.n)

    @app.get("/sessions/{sid}/frequency-response", response_model=schemas.FrequencyResponseOut)
    def session_frequency(sid: str, grid_size: int = 201):
        if grid_size < 2:
            raise HTTPException(422, "grid_size must be >= 2")
        fr = frequency_response(get(sid).state.h, grid_size)
        return schemas.FrequencyResponseOut(grid=fr.grid.tolist(), values=fr.values.tolist())

    @app.get("/sessions/{sid}/regret", response_model=schemas.RegretOut)
    def session_regret(sid: str):
        """Regret against the best fixed filter in hindsight."""
        s = get(sid)
        if s.state.step == 0:
            raise HTTPException(409, "no revealed steps yet")
        rep = s.state.replay()
        mu = s.config.mu
        u = ridge_solve(rep.rows, rep.targets, 2.0 * len(rep) * mu)
        r = static_regret(s.state.loss_history, u, rep, mu)
        return schemas.RegretOut(T=r.T, total_regret=r.total_regret,
                                 normalized_regret=r.normalized_regret, comparator=u.tolist())

    @app.post("/experiments", response_model=schemas.ExperimentOut)
    def run_experiment(req: schemas.ExperimentRequest):
        try:
            cfg = ex.ExperimentConfig.from_mapping(req.config)
        except (TypeError, ValueError) as exc:
            raise HTTPException(422, str(exc)) from None
        try:
            result = ex.run_scenario(cfg)
        except (ex.ExperimentError, FileNotFoundError) as exc:
            raise HTTPException(500, str(exc)) from None
        checks = ex.acceptance_checks(result) if req.check else []
        return schemas.ExperimentOut(
            result=result.to_dict(),
            checks=[schemas.CheckOut(name=n, passed=p, detail=d) for n, p, d in checks])

    return app


app = create_app()
