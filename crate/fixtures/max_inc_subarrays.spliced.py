"""Adjacent increasing subarrays, specified by a header."""
from typing import List


def longest_run(nums: List[int]) -> int:
    # Hand-written helper; splicing must leave it untouched.
    best = run = 1
    for a, b in zip(nums, nums[1:]):
        run = run + 1 if b > a else 1
        best = max(best, run)
    return best


def maxIncSubarrays(nums: List[int]) -> int:
    """
    Given a list nums of n integers, return the maximum possible value of k
    such that there exist two adjacent subarrays of length k each, where both
    subarrays are strictly increasing.
    """
    best = 0
    prev_run = 0
    run = 1
    for i in range(1, len(nums) + 1):
        if i < len(nums) and nums[i] > nums[i - 1]:
            run += 1
        else:
            best = max(best, run // 2, min(prev_run, run))
            prev_run = run
            run = 1
    return best


if __name__ == "__main__":
    print(maxIncSubarrays([2, 5, 7, 8, 9, 2, 3, 4, 3, 1]), longest_run([1, 2, 3]))
