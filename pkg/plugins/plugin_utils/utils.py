#!/usr/bin/env python
# -*- coding: utf-8 -*-

# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

# Make coding more python3-ish, this is required for contributions to Ansible
from __future__ import absolute_import, division, print_function

__metaclass__ = type

import json
import os
import tempfile
from typing import Any, Optional, Tuple

from ansible_collections.zpe.textcnn.plugins.plugin_utils.types import (
    BooleanError,
    BytesError,
    DictError,
    ListDictError,
)


def read_file(in_path: str) -> BytesError:
    data = b""
    try:
        with open(in_path, "rb") as f:
            data = f.read()
        return data, None
    except Exception as err:
        return None, f"Failed to read file {in_path}. Error: {err}"


def write_file(out_path: str, data: bytes) -> BooleanError:
    """Write through a temporary file in the same directory, then rename over out_path."""
    directory = os.path.dirname(os.path.abspath(out_path))
    tmp_path = None
    try:
        fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-")
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp_path, out_path)
        return True, None
    except Exception as err:
        if tmp_path is not None and os.path.exists(tmp_path):
            os.remove(tmp_path)
        return None, f"Failed to write file {out_path}. Error: {err}"


def _read_json_document(in_path: str) -> Tuple[Any, Optional[str]]:
    data, err = read_file(in_path)
    if err:
        return None, err

    try:
        return json.loads(data.decode("utf-8")), None
    except (ValueError, UnicodeDecodeError) as err:
        return None, f"Failed to parse JSON file {in_path}. Error: {err}"


def read_json(in_path: str) -> DictError:
    content, err = _read_json_document(in_path)
    if err:
        return None, err

    if not isinstance(content, dict):
        return None, f"JSON file {in_path} does not hold an object."

    return content, None


def read_json_list(in_path: str) -> ListDictError:
    content, err = _read_json_document(in_path)
    if err:
        return None, err

    if not isinstance(content, list):
        return None, f"JSON file {in_path} does not hold a list."

    return content, None


def dump_json(data: Any) -> str:
    """Stable JSON text: sorted keys, two space indent, trailing newline."""
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def write_json(out_path: str, data: Any) -> BooleanError:
    try:
        content = dump_json(data)
    except (TypeError, ValueError) as err:
        return None, f"Failed to serialize {out_path}. Error: {err}"

    return write_file(out_path, content.encode("utf-8"))


def ensure_directory(path: str) -> BooleanError:
    try:
        os.makedirs(path, exist_ok=True)
        return True, None
    except Exception as err:
        return None, f"Failed to create directory {path}. Error: {err}"
