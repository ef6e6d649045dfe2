# Czech nonbreaking prefixes, also used for Upper Sorbian.
A
B
C
D
E
F
G
H
I
J
K
L
M
N
O
P
Q
R
S
T
U
V
W
X
Y
Z
a
b
c
d
e
f
g
h
i
j
k
l
m
n
o
p
q
r
s
t
u
v
w
x
y
z
# Titles and abbreviations
apod
atd
č
čís
dr
ing
jr
kap
mgr
mj
mld
např
nám
odst
popř
prof
resp
sl
str
sv
tj
tzv
ul
viz
zejm
