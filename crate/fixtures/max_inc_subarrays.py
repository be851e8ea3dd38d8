"""Adjacent increasing subarrays, specified by a header."""
import pythoness
from typing import List


def longest_run(nums: List[int]) -> int:
    # Hand-written helper; splicing must leave it untouched.
    best = run = 1
    for a, b in zip(nums, nums[1:]):
        run = run + 1 if b > a else 1
        best = max(best, run)
    return best


@pythoness.spec(
    tests=[
        "assert maxIncSubarrays([2, 5, 7, 8, 9, 2, 3, 4, 3, 1]) == 3",
        "assert maxIncSubarrays([1, 2, 3, 4, 4, 4, 4, 5, 6, 7]) == 2",
        "assert maxIncSubarrays([1, 2, 3, 4]) == 2",
        "assert maxIncSubarrays([5, 4, 3, 2]) == 1",
        "assert maxIncSubarrays([-15, 19]) == 1",
    ],
    max_retries=3,
)
def maxIncSubarrays(nums: List[int]) -> int:
    """
    Given a list nums of n integers, return the maximum possible value of k
    such that there exist two adjacent subarrays of length k each, where both
    subarrays are strictly increasing.
    """


if __name__ == "__main__":
    print(maxIncSubarrays([2, 5, 7, 8, 9, 2, 3, 4, 3, 1]), longest_run([1, 2, 3]))
