# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

# Make coding more python3-ish, this is required for contributions to Ansible
from __future__ import absolute_import, division, print_function

__metaclass__ = type

from ansible.errors import AnsibleActionFail
from ansible.utils.display import Display

from ansible_collections.zpe.textcnn.plugins.plugin_utils.commands import (
    COMMANDS,
    run_command,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.errors import TextCNNError
from ansible_collections.zpe.textcnn.plugins.plugin_utils.textcnn_action_base import (
    TextCNNActionBase,
)

display = Display()


class ActionModule(TextCNNActionBase):
    """Action module used to run training, tuning and evaluation commands on the controller."""

    TRANSFERS_FILES = False
    _VALID_ARGS = frozenset(("command", "config", "overrides"))
    _requires_connection = False

    def _log_info(self, command: str, message: str) -> None:
        """Log information."""
        display.v(f"TextCNN experiment action - Command: {command} - {message}.")

    def run(self, tmp=None, task_vars=None):
        if task_vars is None:
            task_vars = dict()

        # Get arguments from task
        command = self._task.args.get("command", None)
        config = self._task.args.get("config", None)
        overrides = self._task.args.get("overrides", None)

        result = super(ActionModule, self).run(tmp, task_vars)
        del tmp  # tmp no longer has any effect
        result["changed"] = False
        result["ok"] = False
        result["failed"] = False
        result["skipped"] = False

        if command is None:
            raise AnsibleActionFail("Experiment command was not provided.")

        if command not in COMMANDS:
            raise AnsibleActionFail(
                f"Unknown experiment command {command}. Commands: {', '.join(COMMANDS)}."
            )

        cfg = self._load_config(config, overrides)

        if self._task.check_mode:
            result["skipped"] = True
            result["msg"] = f"Command {command} is not run in check mode."
            return result

        self._log_info(command, f"Writing outputs to {cfg.output_dir}")
        try:
            outputs = run_command(command, cfg)
        except TextCNNError as err:
            raise AnsibleActionFail(f"Experiment command {command} failed. Error: {err}.")

        result["ok"] = True
        result["changed"] = True
        result["outputs"] = outputs
        result["msg"] = f"Command {command} finished. Outputs in {cfg.output_dir}."
        return result
