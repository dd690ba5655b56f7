"""
Main API Server
FastAPI server for the quantum gambling simulator
"""
from typing import List, Optional

import uvicorn
from fastapi import FastAPI, HTTPException, Query, Response
from pydantic import BaseModel, Field, ValidationError

import config
from src.exceptions import GamblingError
from src.harness import ExperimentSpec, ExperimentStats, run_experiment
from src.strategy_analysis import analyze, verify_range

app = FastAPI(title="Quantum Gambling API", version="1.0.0")

MAX_API_GAMES = 200000


class AnalysisResponse(BaseModel):
    """One closed-form row per reward ratio"""
    R: float
    delta: float
    eta_tilde: float
    delta_approx: float
    eta_approx: float
    gain_protocol: float
    detect_worst: float
    games_advisory: float


class SimulateRequest(BaseModel):
    """Request model for a Monte Carlo experiment"""
    R: float = Field(gt=0, allow_inf_nan=False)
    games: int = Field(ge=1, le=MAX_API_GAMES)
    alice: str = "honest"
    bob: str = "honest"
    p_err: float = Field(default=0.0, ge=0.0, le=1.0)
    seed: int = Field(default=config.DEFAULT_SEED, ge=0)


class VerifyResponse(BaseModel):
    passed: bool
    tol: float
    max_deviation: float
    failures: List[float]


def _unprocessable(e: Exception) -> HTTPException:
    return HTTPException(status_code=422, detail=str(e))


@app.get("/")
async def root():
    """Root endpoint"""
    return {
        "message": "Quantum Gambling API",
        "version": "1.0.0",
        "endpoints": {
            "/analyze": "GET - Guaranteed gain table for ?R=...",
            "/simulate": "POST - Run a Monte Carlo experiment",
            "/verify": "GET - Numeric minimax vs closed form",
            "/health": "GET - Health check",
        },
    }


@app.get("/health")
async def health():
    """Health check endpoint"""
    return {"status": "healthy"}


@app.get("/analyze", response_model=List[AnalysisResponse])
def analyze_endpoint(R: List[float] = Query(...)):
    """Closed-form guaranteed gain, splitting parameter and advisory game count"""
    try:
        return [AnalysisResponse(**dict(zip(row.COLUMNS, row.values()))) for row in analyze(R)]
    except (GamblingError, ValueError) as e:
        raise _unprocessable(e)
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))


@app.post("/simulate")
def simulate(request: SimulateRequest):
    """
    Run a Monte Carlo experiment

    Plays the requested games in-process and returns the aggregated
    statistics with the analytic reference and the session verdict.
    """
    try:
        spec = ExperimentSpec(**request.model_dump())
        stats: ExperimentStats = run_experiment(spec)
    except (GamblingError, ValidationError, ValueError) as e:
        raise _unprocessable(e)
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))
    # infinite z-scores serialize as null
    return Response(content=stats.model_dump_json(), media_type="application/json")


@app.get("/verify", response_model=VerifyResponse)
def verify(
    r_min: float = 1.0,
    r_max: float = 1e6,
    points: int = Query(default=7, ge=1, le=200),
    tol: float = 1e-6,
    R: Optional[float] = None,
):
    """Compare the numeric minimax oracle with the closed forms"""
    try:
        if R is not None:
            r_min = r_max = R
            points = 1
        report = verify_range(r_min, r_max, points, tol)
    except (GamblingError, ValueError) as e:
        raise _unprocessable(e)
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))
    return VerifyResponse(
        passed=report.passed,
        tol=report.tol,
        max_deviation=report.max_deviation,
        failures=[p.R for p in report.failures],
    )


if __name__ == "__main__":
    config.configure_logging()
    uvicorn.run(app, host=config.API_HOST, port=config.API_PORT)
