"""HTTP generation service.

JSON API consumed by the browser studio and scripts. Routes are registered
under both /api and /api/v1. Checkpoints live in a directory of .ftgc files
(FTG_CHECKPOINT_DIR or --checkpoint-dir); nothing is auto-loaded, so a fresh
boot reports checkpoint null and generate answers 503 until a load.

Error mapping: schema or domain validation -> 400, infeasible constraints ->
409 with the offending column indices, unknown checkpoint -> 404, missing
checkpoint -> 503. Generation is pure and seeded, so concurrent requests
cannot interact and equal requests return equal bytes.
"""

from __future__ import annotations

import base64
import os
import threading
import time
from pathlib import Path
from typing import Literal, Optional, Union

from fastapi import APIRouter, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from ftg import kernels
from ftg.checkpoint import CHECKPOINT_SUFFIX, load_checkpoint
from ftg.denoisers import Denoiser
from ftg.errors import (CheckpointError, InfeasibleConstraintError,
                        InvalidInputError, LengthMismatchError,
                        MidiParseError, UnsupportedMeterError)
from ftg.guidance import Conditions, GuidanceConfig, SamplerPlan, sample
from ftg.metrics import out_of_key_rate, rhythm_match_rate
from ftg.midi_io import emit_midi
from ftg.pianoroll import PianoRoll, piano_roll_from_json, roll_to_json
from ftg.schedule import NoiseSchedule
from ftg.theory import (ChordProgression, ColumnSpec, KeySequence,
                        KeySignature, out_of_key_pitch_classes,
                        rhythm_controls_from_pattern)

CHORD_UNIT_STEPS = {"step": 1, "beat": 4, "measure": 16}


class GuidanceParams(BaseModel):
    w: Optional[float] = None
    harmonic: bool = True
    rhythm: bool = True
    kappa: float = Field(default=1e-6, gt=0)


class PlanParams(BaseModel):
    mode: Literal["ddpm", "ddim"] = "ddim"
    steps: int = Field(default=10, ge=1)
    eta: float = Field(default=0.0, ge=0.0, le=1.0)
    timesteps: Optional[list[int]] = None


class RhythmRule(BaseModel):
    kind: Literal["free", "exactly", "at_least", "none"]
    n: int = Field(default=1, ge=1)


class GenerationRequest(BaseModel):
    length: int = Field(default=64, ge=1, le=1024)
    chords: Optional[list[str]] = None
    chords_unit: Literal["step", "beat", "measure"] = "beat"
    keys: Optional[Union[str, list[str]]] = None
    rhythm: Optional[str] = None
    rhythm_spec: Optional[list[RhythmRule]] = None
    melody: Optional[dict] = None
    guidance: GuidanceParams = Field(default_factory=GuidanceParams)
    plan: PlanParams = Field(default_factory=PlanParams)
    seed: int = 0
    checkpoint: Optional[str] = None


class CheckpointLoadRequest(BaseModel):
    id: str


class ServiceState:
    """Loaded model registry: loads swap the current (id, denoiser, schedule)
    triple under a lock; inference reads the triple atomically."""

    def __init__(self, checkpoint_dir: Optional[Union[str, Path]] = None):
        self.checkpoint_dir = Path(
            checkpoint_dir or os.environ.get("FTG_CHECKPOINT_DIR", "checkpoints"))
        self._lock = threading.Lock()
        self._current: Optional[tuple[str, Denoiser, NoiseSchedule]] = None

    def list_checkpoints(self) -> list[str]:
        if not self.checkpoint_dir.is_dir():
            return []
        return sorted(p.stem for p in self.checkpoint_dir.glob(f"*{CHECKPOINT_SUFFIX}"))

    def load(self, checkpoint_id: str) -> None:
        path = self.checkpoint_dir / f"{checkpoint_id}{CHECKPOINT_SUFFIX}"
        if not path.is_file():
            raise KeyError(checkpoint_id)
        with self._lock:
            denoiser, sched, _ = load_checkpoint(path)
            self._current = (checkpoint_id, denoiser, sched)

    def set_model(self, checkpoint_id: str, denoiser: Denoiser,
                  sched: NoiseSchedule) -> None:
        with self._lock:
            self._current = (checkpoint_id, denoiser, sched)

    def current(self) -> Optional[tuple[str, Denoiser, NoiseSchedule]]:
        return self._current


def _parse_keys(keys: Union[str, list[str], None], length: int
                ) -> Optional[KeySequence]:
    if keys is None:
        return None
    if isinstance(keys, str):
        return KeySequence.constant(KeySignature.parse(keys), length)
    parsed = [KeySignature.parse(symbol) for symbol in keys]
    if len(parsed) == length:
        return KeySequence(tuple(parsed))
    if len(parsed) * 16 == length:
        return KeySequence(tuple(k for k in parsed for _ in range(16)))
    raise InvalidInputError(
        f"keys list must have one entry per step ({length}) or per measure "
        f"({length // 16}), got {len(parsed)}")


def build_conditions(req: GenerationRequest) -> tuple[Conditions, Optional[object]]:
    """Translate a request into sampler conditions; returns the conditions
    plus the rhythm pattern (for the audit), if any."""
    length = req.length
    chords = None
    if req.chords:
        steps = CHORD_UNIT_STEPS[req.chords_unit]
        if len(req.chords) * steps != length:
            raise InvalidInputError(
                f"{len(req.chords)} chord symbols at unit {req.chords_unit!r} "
                f"cover {len(req.chords) * steps} steps, need {length}")
        chords = ChordProgression.from_symbols(req.chords, steps)

    rhythm = spec = None
    if req.rhythm is not None:
        rhythm, spec = rhythm_controls_from_pattern(req.rhythm, length)
    if req.rhythm_spec is not None:
        if len(req.rhythm_spec) != length:
            raise InvalidInputError(
                f"rhythm_spec must list one rule per step ({length}), "
                f"got {len(req.rhythm_spec)}")
        spec = tuple(ColumnSpec(rule.kind, rule.n) for rule in req.rhythm_spec)

    melody = piano_roll_from_json(req.melody) if req.melody is not None else None
    conditions = Conditions(
        length=length, chords=chords, rhythm=rhythm, rhythm_spec=spec,
        melody=melody, keys=_parse_keys(req.keys, length))
    return conditions, rhythm


def handle_generate(state: ServiceState, req: GenerationRequest) -> dict:
    current = state.current()
    if req.checkpoint is not None:
        if current is None or current[0] != req.checkpoint:
            state.load(req.checkpoint)
            current = state.current()
    if current is None:
        raise LookupError("no checkpoint loaded")
    checkpoint_id, denoiser, sched = current

    conditions, rhythm = build_conditions(req)
    guidance = GuidanceConfig(w=req.guidance.w, harmonic=req.guidance.harmonic,
                              rhythm=req.guidance.rhythm, kappa=req.guidance.kappa)
    plan = SamplerPlan(mode=req.plan.mode, num_steps=req.plan.steps,
                       eta=req.plan.eta, timesteps=req.plan.timesteps)

    start = time.perf_counter()
    result = sample(denoiser, conditions, sched, guidance, plan, seed=req.seed)
    wall_ms = (time.perf_counter() - start) * 1000.0

    ook = out_of_key_rate(result.roll, result.keys)
    if guidance.harmonic and ook != 0.0:
        raise AssertionError(
            f"server bug: harmonic guidance produced out_of_key_rate {ook}")
    audit = {
        "out_of_key_rate": ook,
        "rhythm_match_rate": (rhythm_match_rate(result.roll, rhythm)
                              if rhythm is not None else None),
        "wall_ms": wall_ms,
        "seed": req.seed,
    }
    midi = emit_midi(conditions.melody, result.roll)
    return {
        "roll": roll_to_json(result.roll),
        "midi_base64": base64.b64encode(midi).decode("ascii"),
        "audit": audit,
        "keys": [k.symbol for k in result.keys.keys],
        "out_of_key_pitch_classes": [
            sorted(out_of_key_pitch_classes(k)) for k in result.keys.keys],
        "warnings": list(result.warnings),
        "checkpoint": checkpoint_id,
    }


def _key_table() -> dict:
    table = {}
    for mode in ("major", "minor"):
        for tonic in range(12):
            key = KeySignature(tonic, mode)
            table[key.symbol] = sorted(out_of_key_pitch_classes(key))
    return table


def create_app(checkpoint_dir: Optional[Union[str, Path]] = None) -> FastAPI:
    app = FastAPI(title="ftg generation service", version="1")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    state = ServiceState(checkpoint_dir)
    app.state.service = state
    router = APIRouter()

    @router.get("/health")
    def health():
        current = state.current()
        info = {"status": "ok", "checkpoint": None, "model": None,
                "schedule": None, "kernel_backend": kernels.BACKEND}
        if current is not None:
            checkpoint_id, denoiser, sched = current
            info["checkpoint"] = checkpoint_id
            info["model"] = {"type": type(denoiser).__name__,
                             "params": getattr(denoiser, "param_count", None)}
            info["schedule"] = {"T": sched.T, "sigma_mode": sched.sigma_mode,
                                "eta": sched.eta}
        return info

    @router.get("/checkpoints")
    def checkpoints():
        return {"checkpoints": state.list_checkpoints()}

    @router.post("/checkpoints/load")
    def load_checkpoint_route(body: CheckpointLoadRequest):
        try:
            state.load(body.id)
        except KeyError:
            return JSONResponse(status_code=404, content={
                "error": "unknown_checkpoint",
                "message": f"no checkpoint named {body.id!r} in "
                           f"{state.checkpoint_dir}"})
        return {"checkpoint": body.id}

    @router.get("/theory/keys")
    def theory_keys():
        return {"out_of_key_pitch_classes": _key_table()}

    @router.post("/generate")
    def generate(body: GenerationRequest):
        return handle_generate(state, body)

    app.include_router(router, prefix="/api")
    app.include_router(router, prefix="/api/v1")

    @app.exception_handler(RequestValidationError)
    def on_schema_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={
            "error": "invalid_request", "message": str(exc.errors()[:3])})

    @app.exception_handler(InfeasibleConstraintError)
    def on_infeasible(request: Request, exc: InfeasibleConstraintError):
        return JSONResponse(status_code=409, content={
            "error": "infeasible_constraint", "message": str(exc),
            "columns": exc.columns, "required": exc.required,
            "candidates": exc.candidates})

    @app.exception_handler(LookupError)
    def on_no_checkpoint(request: Request, exc: LookupError):
        if isinstance(exc, KeyError):
            return JSONResponse(status_code=404, content={
                "error": "unknown_checkpoint", "message": str(exc)})
        return JSONResponse(status_code=503, content={
            "error": "no_checkpoint",
            "message": "load a checkpoint before generating"})

    for exc_type in (InvalidInputError, LengthMismatchError, MidiParseError,
                     UnsupportedMeterError, CheckpointError):
        @app.exception_handler(exc_type)
        def on_bad_input(request: Request, exc: Exception):
            return JSONResponse(status_code=400, content={
                "error": "invalid_request", "message": str(exc)})

    return app
