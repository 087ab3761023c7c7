#!/usr/bin/env python
# -*- coding: utf-8 -*-

# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

# Make coding more python3-ish, this is required for contributions to Ansible
from __future__ import absolute_import, division, print_function

__metaclass__ = type

import os
from typing import Dict, Optional, Union

from ansible.errors import AnsibleActionFail
from ansible.plugins.action import ActionBase

from ansible_collections.zpe.textcnn.plugins.plugin_utils.commands import (
    ExperimentConfig,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.errors import (
    ConfigValidationError,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.utils import read_json

ENV_CONFIG = "TEXTCNN_CONFIG"


class TextCNNActionBase(ActionBase):
    """Base action module used for Ansible actions that run text classification experiments."""

    def __init__(self, *args, **kwargs):
        super(TextCNNActionBase, self).__init__(*args, **kwargs)
        self._experiment_config = None

    def _load_config(
        self, config: Optional[Union[str, Dict]], overrides: Optional[Dict] = None
    ) -> ExperimentConfig:
        """Resolve the experiment configuration from a task dictionary, a JSON file, or the environment."""
        config = config or os.environ.get(ENV_CONFIG, None)

        file_data = None
        if isinstance(config, dict):
            file_data = config
        elif isinstance(config, str):
            file_data, err = read_json(config)
            if err:
                raise AnsibleActionFail(f"Failed to read experiment configuration. Error: {err}.")
        elif config is not None:
            raise AnsibleActionFail("Experiment configuration must be a dictionary or a path to a JSON file.")

        if overrides is not None and not isinstance(overrides, dict):
            raise AnsibleActionFail("Overrides must be a dictionary.")

        try:
            self._experiment_config = ExperimentConfig.from_sources(file_data, overrides)
        except ConfigValidationError as err:
            raise AnsibleActionFail(f"Invalid experiment configuration. Error: {err}.")

        return self._experiment_config
