"""
SQLite storage for LLM transcripts used by record/replay.

Schema:
  - completions: one row per distinct prompt, keyed by a SHA-256 of the
    system + user messages, holding the model reply.
"""

from __future__ import annotations

import sqlite3
from pathlib import Path
from typing import Any, Dict, List, Optional

from .utils import content_hash


def _ensure_schema(conn: sqlite3.Connection) -> None:
    cur = conn.cursor()
    cur.execute(
        """
        CREATE TABLE IF NOT EXISTS completions (
            prompt_hash TEXT PRIMARY KEY,
            kind TEXT,
            model TEXT,
            prompt TEXT,
            response TEXT,
            seq INTEGER
        )
        """
    )
    conn.commit()


def prompt_key(system: str, prompt: str) -> str:
    return content_hash(system + "\n\x1e\n" + prompt)


def save_completion(
    system: str,
    prompt: str,
    response: str,
    kind: str = "",
    model: str = "",
    db_path: str | Path = "transcript.sqlite",
) -> str:
    """
    Persist one completion. A prompt seen before keeps its first reply so a
    replay always serves what the first recording saw.

    Returns:
        the prompt hash.
    """
    Path(db_path).parent.mkdir(parents=True, exist_ok=True)
    key = prompt_key(system, prompt)
    conn = sqlite3.connect(str(db_path), timeout=5)
    _ensure_schema(conn)
    cur = conn.cursor()
    seq = cur.execute("SELECT COUNT(*) FROM completions").fetchone()[0]
    cur.execute(
        """
        INSERT OR IGNORE INTO completions (prompt_hash, kind, model, prompt, response, seq)
        VALUES (?, ?, ?, ?, ?, ?)
        """,
        (key, kind, model, prompt, response, seq),
    )
    conn.commit()
    conn.close()
    return key


def load_completion(system: str, prompt: str, db_path: str | Path = "transcript.sqlite") -> Optional[str]:
    if not Path(db_path).exists():
        return None
    conn = sqlite3.connect(str(db_path))
    conn.row_factory = sqlite3.Row
    _ensure_schema(conn)
    row = conn.execute(
        "SELECT response FROM completions WHERE prompt_hash = ?",
        (prompt_key(system, prompt),),
    ).fetchone()
    conn.close()
    return row["response"] if row else None


def list_completions(db_path: str | Path = "transcript.sqlite") -> List[Dict[str, Any]]:
    conn = sqlite3.connect(str(db_path))
    conn.row_factory = sqlite3.Row
    _ensure_schema(conn)
    rows = conn.execute(
        "SELECT prompt_hash, kind, model, response FROM completions ORDER BY seq ASC"
    ).fetchall()
    conn.close()
    return [dict(r) for r in rows]
