"""Reference full-batch gradient descent for the linear head.

Two separable clusters at (2, 0) and (-2, 0) with +-0.1 jitter, zero init,
200 epochs at learning rate 0.5. Prints support accuracy and the class-0
probability of the query (2, 0).
"""
import numpy as np

x = np.array([[2.0, 0.1], [2.1, -0.1], [1.9, 0.0], [-2.0, 0.1], [-2.1, 0.0], [-1.9, -0.1]])
y = np.array([0, 0, 0, 1, 1, 1])
w = np.zeros((2, 2))
b = np.zeros(2)
for _ in range(200):
    z = x @ w.T + b
    p = np.exp(z - z.max(1, keepdims=True))
    p /= p.sum(1, keepdims=True)
    r = p.copy()
    r[np.arange(len(y)), y] -= 1
    w -= 0.5 * r.T @ x / len(y)
    b -= 0.5 * r.mean(0)
z = x @ w.T + b
print("support accuracy", (z.argmax(1) == y).mean())
q = np.array([2.0, 0.0]) @ w.T + b
q = np.exp(q - q.max())
print("p(class 0 | [2,0])", q[0] / q.sum())
