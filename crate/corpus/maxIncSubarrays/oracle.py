from typing import List


def maxIncSubarrays(nums: List[int]) -> int:
    if len(nums) < 2:
        raise ValueError("nums needs at least two elements")

    def increasing(xs):
        return all(a < b for a, b in zip(xs, xs[1:]))

    for k in range(len(nums) // 2, 0, -1):
        for s in range(len(nums) - 2 * k + 1):
            if increasing(nums[s:s + k]) and increasing(nums[s + k:s + 2 * k]):
                return k
    raise AssertionError("k = 1 always succeeds")
