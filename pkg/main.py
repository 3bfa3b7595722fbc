"""
FastAPI wrapper for the flexoelectric IGA solver with streaming support
Runs built-in or posted scenarios and returns one record per sweep point
"""

import json
from typing import Any, Dict, List, Optional

import uvicorn
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from pydantic import BaseModel, Field
import logging

from flexoiga.errors import ConfigError, FlexoIGAError, SolverFailureError
from flexoiga.scenario_workflow import RunRecord, workflow
from flexoiga.scenarios import PRESETS, Scenario, apply_overrides, list_presets, load_preset, validate_scenario
from flexoiga.settings import configure_logging, get_settings

# Configure logging
configure_logging()
logger = logging.getLogger(__name__)

SERVICE_NAME = "Flexoelectric IGA Solver API"

# Initialize FastAPI app
app = FastAPI(
    title=SERVICE_NAME,
    description="REST API for multi-patch isogeometric flexoelectric simulations with streaming support",
    version="1.0.0"
)

# Configure CORS for browser dashboards
app.add_middleware(
    CORSMiddleware,
    allow_origins=[
        "http://localhost:3000",
        "http://localhost:3001",
        "https://localhost:3000",
        "https://localhost:3001",
    ],
    allow_credentials=True,
    allow_methods=["GET", "POST", "OPTIONS"],
    allow_headers=["*"],
)


# Pydantic models for request/response
class RunRequest(BaseModel):
    preset: Optional[str] = None
    scenario: Optional[Dict[str, Any]] = None
    overrides: Dict[str, Any] = Field(default_factory=dict)
    vtk: bool = False
    out_dir: Optional[str] = None


class RunResponse(BaseModel):
    scenario: str
    records: List[RunRecord]
    files: List[str]


class ScenarioInfo(BaseModel):
    name: str
    description: str


def _resolve(request: RunRequest) -> Scenario:
    if (request.preset is None) == (request.scenario is None):
        raise ConfigError("Invalid run request", ["give exactly one of 'preset' or 'scenario'"])
    if request.preset is not None:
        return load_preset(request.preset, request.overrides)
    return validate_scenario(apply_overrides(request.scenario, request.overrides))


def _http_error(e: FlexoIGAError) -> HTTPException:
    if isinstance(e, SolverFailureError):
        logger.error(f"Solver failure: {str(e)}", exc_info=True)
        return HTTPException(status_code=500, detail=str(e))
    logger.error(f"Invalid scenario: {str(e)}", exc_info=not isinstance(e, ConfigError))
    return HTTPException(status_code=400, detail=str(e))


# Health check endpoint
@app.get("/health")
async def health_check():
    """Health check endpoint"""
    return {"status": "healthy", "service": SERVICE_NAME}


@app.get("/api/scenarios", response_model=List[ScenarioInfo])
async def list_scenarios():
    """Built-in scenarios"""
    return [ScenarioInfo(name=name, description=PRESETS[name].get("description", "")) for name in list_presets()]


# Run a scenario (blocking, executed in the worker thread pool)
@app.post("/api/runs", response_model=RunResponse)
def run_scenario(request: RunRequest):
    """Run a posted scenario document or a built-in scenario with overrides"""
    try:
        scn = _resolve(request)
        logger.info(f"Running scenario {scn.name} via API")
        result = workflow.run_scenario(scn, request.out_dir, request.vtk)
        return RunResponse(scenario=result.scenario, records=result.records, files=result.files)
    except FlexoIGAError as e:
        raise _http_error(e)


# Streaming run endpoint
@app.post("/api/runs/stream")
def stream_run(request: RunRequest):
    """Stream one record per sweep point, then the written files"""
    try:
        scn = _resolve(request)
    except FlexoIGAError as e:
        raise _http_error(e)

    def event_stream():
        results = []
        try:
            yield f"data: {json.dumps({'type': 'scenario', 'scenario': scn.name, 'points': len(workflow.plan(scn))})}\n\n"
            for index, point in enumerate(workflow.iter_points(scn)):
                results.append(point)
                chunk_data = {
                    'type': 'record',
                    'index': index,
                    'record': point.record.model_dump(),
                }
                yield f"data: {json.dumps(chunk_data)}\n\n"
            files = workflow.write_outputs(scn, results, request.out_dir or get_settings().output_dir, request.vtk)
            # Send completion signal
            yield f"data: {json.dumps({'type': 'done', 'scenario': scn.name, 'files': files})}\n\n"
        except FlexoIGAError as e:
            logger.error(f"Error in streaming run: {str(e)}", exc_info=True)
            yield f"data: {json.dumps({'type': 'error', 'scenario': scn.name, 'error': str(e)})}\n\n"

    return StreamingResponse(
        event_stream(),
        media_type="text/event-stream",
        headers={
            "Cache-Control": "no-cache",
            "Connection": "keep-alive",
        }
    )


# Root endpoint
@app.get("/")
async def root():
    """Root endpoint with API information"""
    return {
        "message": SERVICE_NAME,
        "version": "1.0.0",
        "endpoints": {
            "health": "/health",
            "list_scenarios": "GET /api/scenarios",
            "run": "POST /api/runs",
            "stream_run": "POST /api/runs/stream",
        }
    }


if __name__ == "__main__":
    settings = get_settings()
    # Run the FastAPI server
    uvicorn.run(
        "main:app",
        host=settings.host,
        port=settings.port,
        log_level=settings.log_level.lower()
    )
