"""Tests for ehdn"""
