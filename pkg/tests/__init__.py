"""
Test suite for INVSEG.

Run tests with: pytest
Run the slow training checks with: pytest --runslow
"""
