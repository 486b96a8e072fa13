# Regenerates maps/default.json. Needs shapely.
import json, math, os
from shapely.geometry import Polygon, LineString, Point
W,H=1189,841
def yn(x): return 230+22*math.sin(2*math.pi*x/700+0.4)
def ys(x): return 640+22*math.sin(2*math.pi*x/700+0.4)
xs=[round(i*W/24,1) for i in range(25)]
north=[[x,round(yn(x),1)] for x in xs]
south=[[x,round(ys(x),1)] for x in xs]
poly=Polygon(north+south[::-1])
s=30.0
# letter, dock x, gold x, target deg, current x, f_par, side
layout=[('A',110,300,8,0,3,1),('B',230,420,8,0,3,-1),
      ('C',340,560,13,6,2,1),('D',460,680,14,7,2,-1),
      ('E',560,760,21,10,1,1),('F',680,880,23,11,1,-1),
      ('G',780,960,36,14,0,1),('H',880,1060,38,15,0,-1),
      ('I',930,720,56,18,0,1),('J',1080,860,60,20,0,-1)]
levels=[]
for L,dx,gx,th,cx,fpar,side in layout:
    P=LineString(south)
    dock=(dx, round(ys(dx)-32,1))
    gold=(gx, round(yn(gx)-12,1))
    D=(gold[0]-dock[0],gold[1]-dock[1]); d=math.hypot(*D); D=(D[0]/d,D[1]/d); n=(-D[1],D[0])
    cn=cx*n[0]
    if cx>0: side=1 if cn>0 else -1
    fperp=side*s*math.sin(math.radians(th))
    f=(fpar*D[0]+fperp*n[0], fpar*D[1]+fperp*n[1])
    c=(cx,0.0); w=(round(f[0]-c[0],3), round(f[1]-c[1],3))
    # realised complexity with rounded wind
    f=(w[0]+c[0],w[1]+c[1]); fp=f[0]*n[0]+f[1]*n[1]; fpa=f[0]*D[0]+f[1]*D[1]
    comp=math.degrees(math.asin(abs(fp)/s)); lam=s*math.cos(math.radians(comp))+fpa
    seg=LineString([dock,(gold[0]-D[0]*35,gold[1]-D[1]*35)])
    ok=poly.contains(Point(dock)) and not poly.contains(Point(gold)) and poly.contains(seg)
    print(L, 'comp %.2f'%comp, 'lam %.1f'%lam, 't %.1f'%((d-35)/lam), 'wind', w, '|w| %.1f'%math.hypot(*w), ok,
          'dockdist %.1f'%LineString(south).distance(Point(dock)), 'golddist %.1f'%LineString(north).distance(Point(gold)))
    stage='Enactive' if L in 'ABCD' else ('EnactiveIconic' if L in 'EFGH' else 'Iconic')
    levels.append({"letter":L,"stream":"Stream1" if L in 'ACEGI' else "Stream2",
      "dock":{"x":dock[0],"y":dock[1]},"gold":{"x":gold[0],"y":gold[1],"radius":35.0},
      "river":{"banks":[north,south]},"current":{"x":c[0],"y":0.0},"wind":{"x":w[0],"y":w[1]},
      "ship_speed":s,"stage":stage,"time_limit":480})
json.dump({"sheet":{"width":W,"height":H},"levels":levels},open(os.path.join(os.path.dirname(os.path.abspath(__file__)),'..','maps','default.json'),'w'),indent=1)
