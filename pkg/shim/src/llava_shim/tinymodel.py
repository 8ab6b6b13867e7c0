"""Builder for a tiny randomly-initialized llava-architecture checkpoint.

Used by the test suite (and available for smoke runs) when no pretrained
weights are on disk: the architecture, processor plumbing, greedy determinism,
and logprob reporting are all real; only the weights are random.  Fully
deterministic for a fixed seed.
"""

from __future__ import annotations

from pathlib import Path

import torch
from tokenizers import Tokenizer, models, pre_tokenizers
from transformers import (
    CLIPImageProcessor,
    CLIPVisionConfig,
    LlamaConfig,
    LlavaConfig,
    LlavaForConditionalGeneration,
    LlavaProcessor,
    PreTrainedTokenizerFast,
)

#: Word-level vocabulary: specials, the ten digits, punctuation, and the words
#: of the evaluation prompts, so score prompts tokenize without <unk> noise.
VOCAB_WORDS = [
    "USER", "ASSISTANT", ":", ".", ",", "(", ")", "?", '"',
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
    "Your", "task", "is", "to", "evaluate", "and", "rate", "the", "caption", "candidate",
    "on", "a", "scale", "of", "based", "given", "Grading", "Criteria", "Print", "Real",
    "Number", "Score", "ONLY", "does", "not", "describe", "image", "at", "all",
    "accurately", "clearly", "describes", "Caption", "Choose", "rating", "from",
    "Reference", "Captions", "Candidate", "Why", "Tell", "me", "reason",
    "A", "dog", "runs", "cat", "man", "woman", "two", "in", "with",
]


def build_tokenizer() -> PreTrainedTokenizerFast:
    vocab = {"<pad>": 0, "<s>": 1, "</s>": 2, "<unk>": 3, "<image>": 4}
    for word in VOCAB_WORDS:
        vocab.setdefault(word, len(vocab))
    backend = Tokenizer(models.WordLevel(vocab, unk_token="<unk>"))
    backend.pre_tokenizer = pre_tokenizers.Sequence(
        [pre_tokenizers.Whitespace(), pre_tokenizers.Digits(individual_digits=True)]
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=backend,
        pad_token="<pad>",
        bos_token="<s>",
        eos_token="</s>",
        unk_token="<unk>",
        additional_special_tokens=["<image>"],
    )


def build_tiny_checkpoint(path: str | Path, seed: int = 0) -> Path:
    """Create and save a tiny llava-style model + processor; returns the path."""
    path = Path(path)
    tokenizer = build_tokenizer()
    vision = CLIPVisionConfig(
        hidden_size=32, intermediate_size=64, num_hidden_layers=2, num_attention_heads=2,
        image_size=28, patch_size=14, projection_dim=32,
    )
    text = LlamaConfig(
        vocab_size=len(tokenizer), hidden_size=32, intermediate_size=64, num_hidden_layers=2,
        num_attention_heads=2, num_key_value_heads=2, max_position_embeddings=512,
        pad_token_id=0, bos_token_id=1, eos_token_id=2,
    )
    config = LlavaConfig(
        vision_config=vision, text_config=text, image_token_index=4, pad_token_id=0
    )
    torch.manual_seed(seed)
    model = LlavaForConditionalGeneration(config)
    image_processor = CLIPImageProcessor(
        size={"shortest_edge": 28}, crop_size={"height": 28, "width": 28}
    )
    processor = LlavaProcessor(
        image_processor=image_processor,
        tokenizer=tokenizer,
        patch_size=14,
        vision_feature_select_strategy="default",
        image_token="<image>",
        num_additional_image_tokens=1,
    )
    path.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(path)
    processor.save_pretrained(path)
    return path


if __name__ == "__main__":
    import sys

    target = sys.argv[1] if len(sys.argv) > 1 else "tiny-llava-checkpoint"
    print(build_tiny_checkpoint(target))
