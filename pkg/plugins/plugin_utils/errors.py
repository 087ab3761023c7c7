#!/usr/bin/env python
# -*- coding: utf-8 -*-

# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

# Make coding more python3-ish, this is required for contributions to Ansible
from __future__ import absolute_import, division, print_function

__metaclass__ = type

from ansible.errors import AnsibleError


class TextCNNError(AnsibleError):
    """Base error raised by the text CNN engine."""

    pass


class UsageError(TextCNNError):
    """Operation called with arguments that break its preconditions."""

    pass


class ConfigValidationError(UsageError):
    """Experiment configuration is invalid. Message names the field."""

    pass


class FormatError(TextCNNError):
    """Input file does not follow the expected format."""

    pass


class NumericError(TextCNNError):
    """Non-finite value found during computation."""

    pass


class MissingDependencyError(TextCNNError):
    """System does not have necessary dependency."""

    pass
