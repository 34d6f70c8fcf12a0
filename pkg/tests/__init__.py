"""
Test suite for the Kähler surface lab.

Run all tests with:
    pytest tests/ -v

Run specific test file:
    pytest tests/test_verify.py -v
"""
