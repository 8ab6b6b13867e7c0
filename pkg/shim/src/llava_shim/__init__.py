"""Inference shim: llava-family models behind the chat-completions logprobs protocol."""

from .engine import ShimConfig, ShimEngine, digit_coverage
from .server import create_app, main

__version__ = "0.1.0"
