# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

# Make coding more python3-ish, this is required for contributions to Ansible
from __future__ import absolute_import, division, print_function

__metaclass__ = type


DOCUMENTATION = r"""
---
module: experiment
short_description: Train and evaluate multi-group embedding sentence classifiers.
description:
  - Run one experiment command on the controller.
  - Commands are train, evaluate, gridsearch, cv, gradcheck, synth and report.
  - Every command writes its outputs and a config.json snapshot into the output directory.
options:
  command:
    description:
      - Experiment command to run.
    type: str
    required: true
    choices: [train, evaluate, gridsearch, cv, gradcheck, synth, report]
  config:
    description:
      - Experiment configuration, given inline as a dictionary or as a path to a JSON file.
      - When omitted, the path in environment variable TEXTCNN_CONFIG is used, then built-in defaults.
    type: raw
    required: false
  overrides:
    description:
      - Fields that take precedence over values from config.
      - Uses the same field names as the configuration file, for example seed, lambdas or output_dir.
    type: dict
    required: false
author:
  - Daniel Nesvera (@zpe-dnesvera)
notes:
  - Environment variable TEXTCNN_OUTPUT_DIR sets the default output directory.
  - Environment variable TEXTCNN_PARALLEL sets the default number of concurrent trials, which requires joblib above 1.
  - Commands are not run in check mode.
  - Task fails if configuration is invalid, if an input file cannot be read, or if training diverges.
"""

EXAMPLES = r"""
# Generate a synthetic corpus with two embedding groups
- name: Write synthetic data
  zpe.textcnn.experiment:
    command: synth
    overrides:
      synth_task: group_informative
      output_dir: /tmp/synthetic

# Tune bounds and repeat training with the configuration written by synth
- name: Tune then repeat MGNC
  zpe.textcnn.experiment:
    command: cv
    config: /tmp/synthetic/experiment.json
    overrides:
      repetitions: 5
      lambda_grid: ["1/3", "3", "81"]
      output_dir: /tmp/results/mgnc

# Render collected results
- name: Build report
  zpe.textcnn.experiment:
    command: report
    overrides:
      report_inputs: [/tmp/results/mgnc]
      output_dir: /tmp/results
"""

RETURN = r"""
outputs:
  description: Files written by the command and its headline numbers.
  returned: success
  type: dict
"""
