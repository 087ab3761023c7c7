# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import pytest
import sys
from unittest.mock import MagicMock
from unittest.mock import patch

from ansible.playbook.play_context import PlayContext

from ansible.errors import AnsibleActionFail

from ansible_collections.zpe.textcnn.plugins.action.experiment import (
    ActionModule,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.errors import NumericError

if not sys.warnoptions:
    import warnings

    warnings.simplefilter("ignore")


# Fixture for action module
@pytest.fixture(scope="function")
def action():
    pc = PlayContext()
    connection = MagicMock()
    loader = MagicMock()
    templar = MagicMock()
    shared_loader_obj = MagicMock()
    task = MagicMock()
    task.check_mode = False
    action = ActionModule(
        play_context=pc,
        loader=loader,
        templar=templar,
        shared_loader_obj=shared_loader_obj,
        task=task,
        connection=connection,
    )

    return action


def _set_args(action, args):
    def _get_option_side_effect(*args_):
        return args.get(*args_)

    action._task.args.get.side_effect = _get_option_side_effect


""" Tests for run """


@patch(
    "ansible_collections.zpe.textcnn.plugins.action.experiment.TextCNNActionBase.run"
)
def test_experiment_run_empty_args(textcnn_action_base_run, action):
    """Task does not have parameters."""
    textcnn_action_base_run.return_value = {}

    action._task.args.get.return_value = None

    with pytest.raises(AnsibleActionFail) as err:
        action.run()

    assert str(err.value) == "Experiment command was not provided."


@patch(
    "ansible_collections.zpe.textcnn.plugins.action.experiment.TextCNNActionBase.run"
)
def test_experiment_run_unknown_command(textcnn_action_base_run, action):
    textcnn_action_base_run.return_value = {}
    _set_args(action, {"command": "deploy"})

    with pytest.raises(AnsibleActionFail) as err:
        action.run()

    assert "Unknown experiment command deploy" in str(err.value)


@patch(
    "ansible_collections.zpe.textcnn.plugins.action.experiment.run_command"
)
@patch(
    "ansible_collections.zpe.textcnn.plugins.action.experiment.TextCNNActionBase.run"
)
def test_experiment_run_success(textcnn_action_base_run, run_command, action, tmp_path):
    """Command outputs are returned and the task is reported as changed."""
    textcnn_action_base_run.return_value = {}
    run_command.return_value = {"checkpoint": "model.npz"}
    _set_args(
        action,
        {"command": "train", "config": {"seed": 2}, "overrides": {"output_dir": str(tmp_path)}},
    )

    result = action.run()

    assert result["ok"] is True
    assert result["changed"] is True
    assert result["failed"] is False
    assert result["outputs"] == {"checkpoint": "model.npz"}

    command, cfg = run_command.call_args[0]
    assert command == "train"
    assert cfg.seed == 2
    assert cfg.output_dir == str(tmp_path)


@patch(
    "ansible_collections.zpe.textcnn.plugins.action.experiment.run_command"
)
@patch(
    "ansible_collections.zpe.textcnn.plugins.action.experiment.TextCNNActionBase.run"
)
def test_experiment_run_command_failure(textcnn_action_base_run, run_command, action):
    textcnn_action_base_run.return_value = {}
    run_command.side_effect = NumericError("Non-finite loss at seed 0, epoch 1, batch 0.")
    _set_args(action, {"command": "train"})

    with pytest.raises(AnsibleActionFail) as err:
        action.run()

    assert "Non-finite loss" in str(err.value)


@patch(
    "ansible_collections.zpe.textcnn.plugins.action.experiment.run_command"
)
@patch(
    "ansible_collections.zpe.textcnn.plugins.action.experiment.TextCNNActionBase.run"
)
def test_experiment_run_check_mode(textcnn_action_base_run, run_command, action):
    textcnn_action_base_run.return_value = {}
    action._task.check_mode = True
    _set_args(action, {"command": "cv"})

    result = action.run()

    assert result["skipped"] is True
    run_command.assert_not_called()


@patch(
    "ansible_collections.zpe.textcnn.plugins.action.experiment.TextCNNActionBase.run"
)
def test_experiment_run_invalid_config(textcnn_action_base_run, action):
    textcnn_action_base_run.return_value = {}
    _set_args(action, {"command": "train", "config": {"variant": "rnn"}})

    with pytest.raises(AnsibleActionFail) as err:
        action.run()

    assert "variant" in str(err.value)


""" Tests for run """
