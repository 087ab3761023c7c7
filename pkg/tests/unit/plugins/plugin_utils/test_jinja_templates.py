# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import sys

if not sys.warnoptions:
    import warnings

    warnings.simplefilter("ignore")

from ansible_collections.zpe.textcnn.plugins.plugin_utils.jinja_templates import (
    _render_template,
    render_report,
    render_table,
)


""" Tests for render_table """


def test_render_table():
    rows = [
        {"name": "mg(w2v+glove)", "cells": {"SST-1": "48.53 (47.10,49.30)"}},
        {"name": "cnn(w2v)", "cells": {"SST-1": "47.40 (46.20,48.10)", "TREC": "92.80 (92.00,93.40)"}},
    ]

    table, err = render_table("Model", ["SST-1", "TREC"], rows)

    assert err is None
    assert table.splitlines() == [
        "| Model | SST-1 | TREC |",
        "|---|---|---|",
        "| mg(w2v+glove) | 48.53 (47.10,49.30) | - |",
        "| cnn(w2v) | 47.40 (46.20,48.10) | 92.80 (92.00,93.40) |",
    ]


""" Tests for render_table """


""" Tests for render_report """


def test_render_report_with_lambda_table():
    report, err = render_report("Results", "| summary |", "| lambdas |", runs_label="10 runs")

    assert err is None
    assert report.startswith("# Results\n")
    assert "over 10 runs" in report
    assert "| summary |" in report
    assert "## Best lambda on the validation set" in report
    assert "| lambdas |" in report


def test_render_report_without_lambda_table():
    report, err = render_report("Results", "| summary |", "")

    assert err is None
    assert "Best lambda" not in report


def test_render_template_error():
    content, err = _render_template("{% for %}", {})
    assert content is None
    assert "Failed to render report content" in err


""" Tests for render_report """
