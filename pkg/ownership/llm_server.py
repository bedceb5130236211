# ownership/llm_server.py

"""
OpenAI-compatible chat completion backends.

  - LlmCompleter: live chat-completions calls (any endpoint speaking the
    OpenAI wire protocol), optionally recording every reply into a transcript.
  - ReplayCompleter: serves replies from a recorded transcript, no network.

The API key is read from the environment variable named in LlmParams
(default OPENAI_API_KEY); a .env file is honored.
"""

from __future__ import annotations

import json
import logging
import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional, Protocol

import openai
from dotenv import load_dotenv

from .base import BackendError, InputError, LlmParams
from .transcript_store import load_completion, prompt_key, save_completion

load_dotenv()

logger = logging.getLogger(__name__)

PROMPTS_PATH = Path(__file__).resolve().parent.parent / "prompts.json"


@lru_cache(maxsize=8)
def _load_prompts(file_path: str) -> Dict[str, str]:
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise InputError(f"Prompt file '{file_path}' not found.")
    except json.JSONDecodeError:
        raise InputError(f"Error decoding JSON from the prompt file '{file_path}'.")


def load_prompt_from_file(prompt_key_name: str, file_path: str | Path = PROMPTS_PATH) -> str:
    prompt = _load_prompts(str(file_path)).get(prompt_key_name, "")
    if not prompt:
        raise InputError(f"No prompt found with key '{prompt_key_name}' in {file_path}")
    return prompt


class Completer(Protocol):
    def complete(self, prompt: str, kind: str = "") -> str: ...


class LlmCompleter:
    def __init__(
        self,
        params: LlmParams = LlmParams(),
        client: Any = None,
        transcript_path: Optional[str | Path] = None,
    ) -> None:
        self.params = params
        self.transcript_path = transcript_path
        if client is None:
            api_key = os.environ.get(params.api_key_env)
            if not api_key:
                raise BackendError(
                    f"Please set {params.api_key_env} as an environment variable to use the llm backend."
                )
            client = openai.OpenAI(
                api_key=api_key,
                base_url=params.base_url or os.environ.get("OPENAI_BASE_URL") or None,
            )
        self.client = client

    def complete(self, prompt: str, kind: str = "") -> str:
        system = load_prompt_from_file("system")
        messages = [
            {"role": "system", "content": system},
            {"role": "user", "content": prompt},
        ]
        logger.debug("Chat completion (%s): %d prompt chars", kind or "unlabeled", len(prompt))
        try:
            response = self.client.chat.completions.create(
                model=self.params.model,
                messages=messages,
                temperature=self.params.temperature,
                max_tokens=self.params.max_tokens,
            )
        except openai.OpenAIError as e:
            raise BackendError(f"Chat completion failed: {e}")
        text = (response.choices[0].message.content or "").strip()
        if self.transcript_path:
            save_completion(system, prompt, text, kind=kind, model=self.params.model, db_path=self.transcript_path)
        return text


class ReplayCompleter:
    def __init__(self, transcript_path: str | Path) -> None:
        if not Path(transcript_path).exists():
            raise InputError(f"Transcript '{transcript_path}' not found.")
        self.transcript_path = transcript_path

    def complete(self, prompt: str, kind: str = "") -> str:
        system = load_prompt_from_file("system")
        text = load_completion(system, prompt, db_path=self.transcript_path)
        if text is None:
            raise BackendError(
                f"No recorded {kind or 'completion'} for prompt {prompt_key(system, prompt)[:12]} "
                f"in {self.transcript_path}"
            )
        return text
