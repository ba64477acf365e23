"""HTTP surface: one POST endpoint per solver entry point.

Bad input data maps to 400, a solver that proves the request unsatisfiable
maps to 409, and a settlement loop that stops without converging is still a
200 -- the response says so via ``converged``.
"""
from fastapi import FastAPI, HTTPException

from ..dispatch import DispatchInfeasibleError
from ..lp import LpStructureError
from ..market import SettlementError
from ..network import CaseFormatError
from ..scheduling import BudgetError
from . import core
from .models import (
    AusRequest,
    AusResponse,
    DispatchRequest,
    DispatchResponse,
    PtdfRequest,
    PtdfResponse,
    ScheduleRequest,
    ScheduleResponse,
    SearchRequest,
    SearchResponse,
)


def _run(handler, req):
    try:
        return handler(req)
    except DispatchInfeasibleError as exc:
        raise HTTPException(
            status_code=409, detail={"error": str(exc), "period": exc.period}
        ) from exc
    except SettlementError as exc:
        raise HTTPException(
            status_code=409, detail={"error": str(exc), "iteration": exc.iteration}
        ) from exc
    except BudgetError as exc:
        raise HTTPException(
            status_code=409, detail={"error": str(exc), "budget": True}
        ) from exc
    except (CaseFormatError, LpStructureError, ValueError) as exc:
        raise HTTPException(status_code=400, detail={"error": str(exc)}) from exc


def create_app() -> FastAPI:
    app = FastAPI(title="bessplan", version="1.0.0")

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/ptdf", response_model=PtdfResponse)
    def ptdf(req: PtdfRequest) -> PtdfResponse:
        return _run(core.handle_ptdf, req)

    @app.post("/dispatch", response_model=DispatchResponse)
    def dispatch(req: DispatchRequest) -> DispatchResponse:
        return _run(core.handle_dispatch, req)

    @app.post("/schedule", response_model=ScheduleResponse)
    def schedule(req: ScheduleRequest) -> ScheduleResponse:
        return _run(core.handle_schedule, req)

    @app.post("/aus", response_model=AusResponse)
    def aus(req: AusRequest) -> AusResponse:
        return _run(core.handle_aus, req)

    @app.post("/search", response_model=SearchResponse)
    def search(req: SearchRequest) -> SearchResponse:
        return _run(core.handle_search, req)

    return app
