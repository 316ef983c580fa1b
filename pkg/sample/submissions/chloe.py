def fibonacci(n):
    result = 1
    for _ in range(n):
        result = result * 2
    return result


n = int(input())
print(fibonacci(n))
