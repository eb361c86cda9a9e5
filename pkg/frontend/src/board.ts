// Flat-top hex board: cube coordinates project to the canvas via the
// axial pair (x -> column, z -> row).  Purely presentational; the view
// model owns all state.

import { Marker } from "./state.js";

export interface Pixel {
  px: number;
  py: number;
}

export function cubeToPixel(x: number, z: number, size: number): Pixel {
  return {
    px: size * 1.5 * x,
    py: size * Math.sqrt(3) * (z + x / 2),
  };
}

export function hexCorners(center: Pixel, size: number): Pixel[] {
  const corners: Pixel[] = [];
  for (let i = 0; i < 6; i++) {
    const angle = (Math.PI / 180) * (60 * i);
    corners.push({
      px: center.px + size * Math.cos(angle),
      py: center.py + size * Math.sin(angle),
    });
  }
  return corners;
}

export function markerColor(marker: Marker): string {
  const base = marker.side === "blue" ? [66, 133, 244] : [219, 68, 55];
  const alpha = marker.fade === 0 ? 1 : Math.max(0.15, 1 - marker.fade / 4);
  return `rgba(${base[0]},${base[1]},${base[2]},${alpha.toFixed(2)})`;
}

export function cellsInDisk(radius: number): Array<[number, number, number]> {
  const out: Array<[number, number, number]> = [];
  for (let x = -radius; x <= radius; x++) {
    for (let y = Math.max(-radius, -x - radius); y <= Math.min(radius, -x + radius); y++) {
      out.push([x, y, -x - y]);
    }
  }
  return out;
}

export class BoardRenderer {
  constructor(
    private readonly ctx: CanvasRenderingContext2D,
    private readonly width: number,
    private readonly height: number,
  ) {}

  render(mapRadius: number, markers: Marker[]): void {
    const size = Math.max(
      2,
      Math.min(this.width, this.height) / (3.5 * Math.max(mapRadius, 1)),
    );
    const cx = this.width / 2;
    const cy = this.height / 2;
    this.ctx.clearRect(0, 0, this.width, this.height);
    this.ctx.strokeStyle = "#b5b5b5";
    this.ctx.fillStyle = "#e8e8e8";
    for (const [x, , z] of cellsInDisk(mapRadius)) {
      const { px, py } = cubeToPixel(x, z, size);
      this.tracePath(px + cx, py + cy, size - 0.5);
      this.ctx.fill();
      this.ctx.stroke();
    }
    for (const marker of markers) {
      const { px, py } = cubeToPixel(marker.pos[0], marker.pos[2], size);
      this.ctx.fillStyle = markerColor(marker);
      this.ctx.beginPath();
      this.ctx.arc(px + cx, py + cy, size * 0.55, 0, Math.PI * 2);
      this.ctx.fill();
    }
  }

  private tracePath(px: number, py: number, size: number): void {
    const corners = hexCorners({ px, py }, size);
    this.ctx.beginPath();
    this.ctx.moveTo(corners[0].px, corners[0].py);
    for (const corner of corners.slice(1)) {
      this.ctx.lineTo(corner.px, corner.py);
    }
    this.ctx.closePath();
  }
}
