from .parse import ParsedResponse, MatchResult, parse_response, compare
from .client import EndpointConfig, CompletionClient, generate_once
from .orchestrate import (CheckpointRun, GenerationAttempt, SamplePrediction,
                          generate_with_regeneration, run_checkpoint, run_experiment,
                          load_run, load_runs)

__version__ = '0.1.0'
name = 'llm_inference'
