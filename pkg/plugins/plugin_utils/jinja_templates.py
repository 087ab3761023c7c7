#!/usr/bin/env python
# -*- coding: utf-8 -*-

# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

# Make coding more python3-ish, this is required for contributions to Ansible
from __future__ import absolute_import, division, print_function

__metaclass__ = type

from jinja2 import Environment, TemplateError
from typing import Dict, List

from ansible_collections.zpe.textcnn.plugins.plugin_utils.types import StringError


TABLE_TEMPLATE = """\
| {{ corner }} |{% for d in columns %} {{ d }} |{% endfor %}
|---|{% for d in columns %}---|{% endfor %}
{% for row in rows %}| {{ row.name }} |{% for d in columns %} {{ row.cells.get(d, "-") }} |{% endfor %}
{% endfor %}"""

REPORT_TEMPLATE = """\
# {{ title }}

Results mean (min, max) over {{ runs_label }}, in percent.

{{ summary_table }}
{% if lambda_table %}
## Best lambda on the validation set

Tuples list one bound per embedding group.

{{ lambda_table }}
{% endif %}
"""


def _render_template(template: str, context: Dict) -> StringError:
    """Render specific template based on context dictionary."""
    try:
        jinja_env = Environment(keep_trailing_newline=True)
        jinja_template = jinja_env.from_string(template)
        render_template = jinja_template.render(context)
        return render_template, None
    except TemplateError as err:
        return None, f"Failed to render report content. Err: {err}"


def render_table(corner: str, columns: List[str], rows: List[Dict]) -> StringError:
    """Markdown table. rows: [{"name": str, "cells": {column: text}}]."""
    context = {"corner": corner, "columns": columns, "rows": rows}
    return _render_template(TABLE_TEMPLATE, context)


def render_report(
    title: str, summary_table: str, lambda_table: str, runs_label: str = "repeated runs"
) -> StringError:
    context = {
        "title": title,
        "summary_table": summary_table,
        "lambda_table": lambda_table,
        "runs_label": runs_label,
    }
    return _render_template(REPORT_TEMPLATE, context)
