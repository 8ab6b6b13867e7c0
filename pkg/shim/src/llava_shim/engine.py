"""Generation engine: a llava-family model with per-position top-K logprobs.

Probabilities are post-softmax over the raw (unprocessed) logits, so the
temperature-0 path reports exactly the distribution greedy decoding argmaxes
over; sampling warpers affect token selection only.  One generation runs at a
time per engine instance.
"""

from __future__ import annotations

import base64
import binascii
import io
import logging
import threading
from dataclasses import dataclass

import torch
from PIL import Image, UnidentifiedImageError
from transformers import AutoProcessor, LlavaForConditionalGeneration

from .schemas import (
    ChatCompletionRequest,
    ChatCompletionResponse,
    Choice,
    ChoiceLogprobs,
    ChoiceMessage,
    TokenLogprob,
    TopLogprob,
)

logger = logging.getLogger(__name__)

MIN_TOP_LOGPROBS = 20


class ShimError(Exception):
    """Protocol-level request failure (bad image, context overflow, ...)."""


@dataclass(frozen=True)
class ShimConfig:
    """Model and serving configuration (resolved from flags/env by the caller)."""

    model_path: str
    device: str = "cpu"
    max_top_logprobs: int = 40
    host: str = "127.0.0.1"
    port: int = 8000

    def __post_init__(self):
        if self.max_top_logprobs < MIN_TOP_LOGPROBS:
            raise ValueError(f"max_top_logprobs must be >= {MIN_TOP_LOGPROBS}")


class ShimEngine:
    """Loads the model once and serves generations serially."""

    def __init__(self, config: ShimConfig):
        self.config = config
        logger.info("loading model from %s", config.model_path)
        try:
            self.model = LlavaForConditionalGeneration.from_pretrained(config.model_path)
            self.processor = AutoProcessor.from_pretrained(config.model_path)
        except (OSError, ValueError) as exc:
            raise RuntimeError(f"cannot load model weights from {config.model_path!r}: {exc}") from exc
        self.model.to(config.device)
        self.model.eval()
        self.tokenizer = self.processor.tokenizer
        self._lock = threading.Lock()
        self._context_limit = int(self.model.config.text_config.max_position_embeddings)

    # -- prompt assembly ----------------------------------------------------

    def render_prompt(self, request: ChatCompletionRequest) -> str:
        """Flatten chat turns into the llava conversation format.

        The image placeholder rides on the first user turn; the prompt always
        ends with the assistant cue so generation continues the last turn.
        """
        pieces = []
        image_pending = True
        for role, text in request.message_texts():
            if role == "user":
                if image_pending:
                    pieces.append(f"USER: <image>\n{text}")
                    image_pending = False
                else:
                    pieces.append(f"USER: {text}")
            elif role == "assistant":
                pieces.append(f"ASSISTANT: {text}")
            else:
                pieces.append(text)
        return " ".join(pieces) + " ASSISTANT:"

    def _decode_image(self, request: ChatCompletionRequest) -> Image.Image:
        part = request.image
        try:
            raw = base64.b64decode(part.data, validate=True)
            return Image.open(io.BytesIO(raw)).convert("RGB")
        except (binascii.Error, ValueError, UnidentifiedImageError, OSError) as exc:
            raise ShimError(f"image payload is not a decodable image: {exc}") from exc

    def _token_text(self, token_id: int) -> str:
        token = self.tokenizer.convert_ids_to_tokens([token_id])[0]
        text = self.tokenizer.convert_tokens_to_string([token])
        return text if text else token

    def _single_token_id(self, text: str) -> int | None:
        ids = self.tokenizer.encode(text, add_special_tokens=False)
        return ids[0] if len(ids) == 1 else None

    # -- generation ---------------------------------------------------------

    def generate(self, request: ChatCompletionRequest) -> ChatCompletionResponse:
        image = self._decode_image(request)
        prompt = self.render_prompt(request)
        inputs = self.processor(images=image, text=prompt, return_tensors="pt").to(self.config.device)
        prompt_len = int(inputs["input_ids"].shape[1])
        if prompt_len + request.max_tokens > self._context_limit:
            raise ShimError(
                f"request needs {prompt_len + request.max_tokens} positions but the model "
                f"context is {self._context_limit}"
            )
        top_k = min(request.top_logprobs, self.config.max_top_logprobs)

        with self._lock:
            if request.seed is not None:
                torch.manual_seed(request.seed)
            sample = request.temperature > 0.0
            kwargs = dict(
                max_new_tokens=request.max_tokens,
                min_new_tokens=1,
                do_sample=sample,
                output_logits=True,
                return_dict_in_generate=True,
                pad_token_id=self.tokenizer.pad_token_id,
            )
            if sample:
                kwargs["temperature"] = request.temperature
                kwargs["top_p"] = request.top_p
            with torch.no_grad():
                output = self.model.generate(**inputs, **kwargs)

        new_ids = output.sequences[0, prompt_len:].tolist()
        content: list[TokenLogprob] = []
        requested_ids = None
        if request.logprobs_for_tokens is not None:
            requested_ids = {
                text: self._single_token_id(text) for text in request.logprobs_for_tokens
            }
        for step, token_id in enumerate(new_ids):
            logprobs = torch.log_softmax(output.logits[step][0].float(), dim=-1)
            values, indices = torch.topk(logprobs, k=min(top_k, logprobs.shape[-1]))
            top = [
                TopLogprob(token=self._token_text(int(i)), logprob=float(v))
                for v, i in zip(values, indices)
            ]
            requested = None
            if requested_ids is not None:
                requested = {
                    text: float(logprobs[tid]) if tid is not None else float("-inf")
                    for text, tid in requested_ids.items()
                }
            content.append(
                TokenLogprob(
                    token=self._token_text(token_id),
                    logprob=float(logprobs[token_id]),
                    top_logprobs=top,
                    requested_logprobs=requested,
                )
            )

        stopped = len(new_ids) < request.max_tokens or new_ids[-1] == self.tokenizer.eos_token_id
        text = "".join(t.token for t in content)
        choice = Choice(
            message=ChoiceMessage(content=text),
            finish_reason="stop" if stopped else "length",
            logprobs=ChoiceLogprobs(content=content) if request.logprobs else None,
        )
        return ChatCompletionResponse(model=self.config.model_path, choices=[choice])


def digit_coverage(responses) -> tuple[int, int]:
    """Diagnostic: over positions whose chosen token is a digit, count those
    whose reported top-K covers all ten digit tokens.

    Returns (covered_positions, digit_positions).  On score prompts against a
    real model this should stay >= 95%; it is a smoke diagnostic, not a
    correctness gate.
    """
    digits = set("0123456789")

    def as_digit(token: str) -> str | None:
        stripped = token.lstrip(" ")
        return stripped if stripped in digits else None

    covered = total = 0
    for response in responses:
        logprobs = response.choices[0].logprobs
        if logprobs is None:
            continue
        for token in logprobs.content:
            if as_digit(token.token) is None:
                continue
            total += 1
            seen = {as_digit(t.token) for t in token.top_logprobs}
            if digits <= seen:
                covered += 1
    return covered, total
