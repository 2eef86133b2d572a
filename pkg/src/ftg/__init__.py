"""Constrained-diffusion engine for symbolic music on piano rolls.

The engine trains a conditional denoising diffusion model on onset/sustain
piano rolls and, at sampling time, replaces the predicted noise with the
nearest prediction whose implied clean roll satisfies hard music-theory
constraints (in-key pitches, per-column onset counts). The projection is
closed-form and exact, so the binarized output provably satisfies the
constraints for every seed.
"""

from ftg.pianoroll import (
    PianoRoll,
    LatentRoll,
    ConditionRoll,
    ModelInput,
    binarize,
    build_condition_cr,
    build_condition_c,
    concat_model_input,
)
from ftg.theory import (
    KeySignature,
    Chord,
    ChordProgression,
    RhythmPattern,
    KeySequence,
    ColumnSpec,
    ConstraintMask,
    out_of_key_pitch_classes,
    chord_pitch_classes,
    derive_keys_from_chords,
    recognize_chords,
    build_constraint_mask,
    rhythm_controls_from_pattern,
)
from ftg.schedule import (
    NoiseSchedule,
    linear_schedule,
    forward_noise,
    uniform_timesteps,
)
from ftg.denoisers import Denoiser, ToyDenoiser, GaussianOracleDenoiser, oracle_epsilon
from ftg.guidance import (
    GuidanceConfig,
    SamplerPlan,
    Conditions,
    SampleResult,
    cfg_combine,
    predict_x0,
    correct_harmonic,
    correct_rhythm,
    correct_joint,
    ddpm_step,
    ddim_step,
    sample,
    sample_batch,
)
from ftg.training import TrainConfig, TrainingExample, TrainReport, train
from ftg.checkpoint import save_checkpoint, load_checkpoint
from ftg.metrics import (
    moa,
    moa_many,
    chord_similarity,
    chord_similarity_many,
    out_of_key_rate,
    rhythm_match_rate,
)
from ftg.midi_io import parse_midi, quantize, select_tracks, segment_4bars, emit_midi
from ftg.corpus import CorpusSpec, synth_corpus, save_corpus, load_corpus
from ftg.errors import (
    InvalidInputError,
    LengthMismatchError,
    ScheduleError,
    InfeasibleConstraintError,
    MidiParseError,
    UnsupportedMeterError,
    MetricError,
    CheckpointError,
)

__version__ = "0.1.0"
