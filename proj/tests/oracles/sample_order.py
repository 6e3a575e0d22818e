"""Independent oracle for sample_subset: mt19937_64 written from its published
recurrence, the rejection draw, and Fisher-Yates over sorted ids. Prints the
order pinned in test_corpus.cpp."""
M=(1<<64)-1
class MT64:
    def __init__(s,seed):
        s.mt=[0]*312; s.mt[0]=seed&M
        for i in range(1,312):
            s.mt[i]=(6364136223846793005*(s.mt[i-1]^(s.mt[i-1]>>62))+i)&M
        s.i=312
    def __call__(s):
        if s.i>=312:
            for k in range(312):
                x=(s.mt[k]&0xFFFFFFFF80000000)|(s.mt[(k+1)%312]&0x7FFFFFFF)
                xa=x>>1
                if x&1: xa^=0xB5026F5AA96619E9
                s.mt[k]=s.mt[(k+156)%312]^xa
            s.i=0
        y=s.mt[s.i]; s.i+=1
        y^=(y>>29)&0x5555555555555555
        y^=(y<<17)&0x71D67FFFEDA60000
        y^=(y<<37)&0xFFF7EEE000000000
        y^=y>>43
        return y&M
r=MT64(5489)
for _ in range(9999): r()
assert r()==9981545732273789042, "10000th check"
def below(r,b):
    t=((1<<64)-b)%b
    while True:
        x=r()
        if x>=t: return x%b
ids=sorted("d%d"%i for i in range(10))
r=MT64(7)
for i in range(len(ids),1,-1):
    j=below(r,i); ids[i-1],ids[j]=ids[j],ids[i-1]
print(" ".join(ids)+" ")
