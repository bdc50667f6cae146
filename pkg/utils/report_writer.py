# coding=utf-8
"""Tables as pandas DataFrames (CSV or aligned text), everything else as sorted-key JSON."""

import json
import os
from typing import Iterable, List, Optional

import numpy as np
import pandas as pd


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def to_json_string(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True)


def write_json(obj, path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, mode='w', encoding='utf-8') as f_out:
        f_out.write(to_json_string(obj))
        f_out.write('\n')


def make_table(rows: Iterable[dict], columns: Optional[List[str]] = None) -> pd.DataFrame:
    return pd.DataFrame(list(rows), columns=columns)


def format_table(df: pd.DataFrame, fmt: str = 'text') -> str:
    if fmt == 'csv':
        return df.to_csv(index=False)
    if fmt == 'text':
        return df.to_string(index=False)
    raise ValueError(f'unknown table format {fmt!r}')


def write_table(df: pd.DataFrame, path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    df.to_csv(path, index=False)
