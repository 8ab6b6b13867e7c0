"""Wire-protocol models: chat completions with images and per-position top-K logprobs.

This mirrors the evaluation engine's backend protocol (and the de-facto open
inference-server logprobs schema) without importing it: the JSON surface is
the contract.  One extension: ``logprobs_for_tokens`` asks for the exact
probabilities of an explicit token list at every generated position, closing
the top-K approximation gap for callers that need specific tokens (e.g. the
ten digits).
"""

from __future__ import annotations

from typing import Annotated, Literal

from pydantic import BaseModel, Field, model_validator


class ImagePart(BaseModel):
    type: Literal["image"]
    data: str = Field(description="base64-encoded image bytes")
    media_type: str = "image/jpeg"


class TextPart(BaseModel):
    type: Literal["text"]
    text: str


ContentPart = Annotated[ImagePart | TextPart, Field(discriminator="type")]


class Message(BaseModel):
    role: Literal["system", "user", "assistant"]
    content: list[ContentPart] = Field(min_length=1)


class ChatCompletionRequest(BaseModel):
    model: str
    messages: list[Message] = Field(min_length=1)
    temperature: float = Field(default=0.0, ge=0.0)
    top_p: float = Field(default=1.0, gt=0.0, le=1.0)
    max_tokens: int = Field(ge=1)
    logprobs: bool = False
    top_logprobs: int = Field(default=20, ge=1)
    seed: int | None = None
    logprobs_for_tokens: list[str] | None = Field(
        default=None,
        description="Also report exact logprobs for these tokens at every position",
    )

    @model_validator(mode="after")
    def _exactly_one_image(self):
        images = [
            part
            for message in self.messages
            for part in message.content
            if isinstance(part, ImagePart)
        ]
        if len(images) != 1:
            raise ValueError(f"request must carry exactly one image part, got {len(images)}")
        return self

    @property
    def image(self) -> ImagePart:
        for message in self.messages:
            for part in message.content:
                if isinstance(part, ImagePart):
                    return part
        raise AssertionError("validated request always has an image")

    def message_texts(self) -> list[tuple[str, str]]:
        """(role, concatenated text) per message, images elided."""
        out = []
        for message in self.messages:
            text = "".join(part.text for part in message.content if isinstance(part, TextPart))
            out.append((message.role, text))
        return out


class TopLogprob(BaseModel):
    token: str
    logprob: float


class TokenLogprob(BaseModel):
    token: str
    logprob: float
    top_logprobs: list[TopLogprob]
    requested_logprobs: dict[str, float] | None = None


class ChoiceLogprobs(BaseModel):
    content: list[TokenLogprob]


class ChoiceMessage(BaseModel):
    role: Literal["assistant"] = "assistant"
    content: str


class Choice(BaseModel):
    index: int = 0
    message: ChoiceMessage
    finish_reason: Literal["stop", "length", "error"]
    logprobs: ChoiceLogprobs | None = None


class ChatCompletionResponse(BaseModel):
    model: str
    choices: list[Choice]


class ErrorDetail(BaseModel):
    message: str
    type: str


class ErrorResponse(BaseModel):
    error: ErrorDetail


class HealthResponse(BaseModel):
    status: str
    model: str
    device: str
    max_top_logprobs: int
