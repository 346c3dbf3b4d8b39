/**
 * Minimal static SVG chart builder: numeric-x line charts and categorical
 * grouped bar charts with a shared axis/legend layout. Output is plain
 * SVG text with no scripting, sized for embedding in docs.
 */

export interface LineSeries {
  label: string;
  color: string;
  xs: number[];
  ys: number[];
  dash?: string;
  markers?: boolean;
}

export interface LineChartOpts {
  title: string;
  subtitle?: string;
  xLabel: string;
  yLabel: string;
  series: LineSeries[];
  xTicks?: number[];
  yMin?: number;
  yMax?: number;
  yFormat?: (v: number) => string;
  xFormat?: (v: number) => string;
  width?: number;
  height?: number;
}

export interface BarSeries {
  label: string;
  color: string;
  /** One value per category; null leaves the slot empty. */
  values: Array<number | null>;
}

export interface BarChartOpts {
  title: string;
  subtitle?: string;
  xLabel: string;
  yLabel: string;
  categories: string[];
  series: BarSeries[];
  /** Optional scatter overlay, e.g. one dot per member of a category. */
  dots?: { label: string; color: string; points: Array<{ cat: number; value: number }> };
  yMin?: number;
  yMax?: number;
  yFormat?: (v: number) => string;
  width?: number;
  height?: number;
}

export function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function niceTicks(min: number, max: number, count: number): number[] {
  const range = max - min || 1;
  const rough = range / count;
  const mag = Math.pow(10, Math.floor(Math.log10(rough)));
  const step = [1, 2, 2.5, 5, 10].map((m) => m * mag).find((n) => n >= rough) ?? rough;
  const start = Math.ceil(min / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= max + step * 0.001; v += step) {
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : v);
  }
  return ticks;
}

function fmtTick(v: number, span: number): string {
  if (Number.isInteger(v) && span >= 5) return String(v);
  const decimals = Math.max(0, 2 - Math.floor(Math.log10(span || 1)));
  return v.toFixed(Math.min(decimals, 6));
}

interface Frame {
  w: number;
  h: number;
  ml: number;
  mr: number;
  mt: number;
  mb: number;
  pw: number;
  ph: number;
}

function frame(width: number, height: number): Frame {
  const ml = 62, mr = 18, mt = 34, mb = 48;
  return { w: width, h: height, ml, mr, mt, mb, pw: width - ml - mr, ph: height - mt - mb };
}

function header(fr: Frame, title: string, subtitle?: string): string {
  let s = `<text x="${fr.ml}" y="14" font-size="11" font-weight="600" fill="#222">${esc(title)}</text>\n`;
  if (subtitle) {
    s += `<text x="${fr.ml}" y="25" font-size="7.5" fill="#888">${esc(subtitle)}</text>\n`;
  }
  return s;
}

function yAxis(
  fr: Frame,
  yMin: number,
  yMax: number,
  yOf: (v: number) => number,
  label: string,
  format?: (v: number) => string,
): string {
  const span = yMax - yMin;
  const fmt = format ?? ((v: number) => fmtTick(v, span));
  let s = "";
  for (const v of niceTicks(yMin, yMax, 5)) {
    const y = yOf(v).toFixed(1);
    s += `<line x1="${fr.ml}" y1="${y}" x2="${fr.ml + fr.pw}" y2="${y}" stroke="#eee" stroke-width="0.5"/>\n`;
    s += `<line x1="${fr.ml - 3}" y1="${y}" x2="${fr.ml}" y2="${y}" stroke="#333" stroke-width="0.5"/>\n`;
    s += `<text x="${fr.ml - 5}" y="${(yOf(v) + 2.5).toFixed(1)}" text-anchor="end" font-size="7" fill="#555">${esc(fmt(v))}</text>\n`;
  }
  const cy = fr.mt + fr.ph / 2;
  s += `<text x="13" y="${cy}" text-anchor="middle" font-size="8.5" fill="#444" transform="rotate(-90,13,${cy})">${esc(label)}</text>\n`;
  return s;
}

function axesFrame(fr: Frame): string {
  return (
    `<line x1="${fr.ml}" y1="${fr.mt}" x2="${fr.ml}" y2="${fr.mt + fr.ph}" stroke="#333" stroke-width="0.8"/>\n` +
    `<line x1="${fr.ml}" y1="${fr.mt + fr.ph}" x2="${fr.ml + fr.pw}" y2="${fr.mt + fr.ph}" stroke="#333" stroke-width="0.8"/>\n`
  );
}

function xCaption(fr: Frame, label: string): string {
  return `<text x="${fr.ml + fr.pw / 2}" y="${fr.h - 6}" text-anchor="middle" font-size="8.5" fill="#444">${esc(label)}</text>\n`;
}

interface LegendEntry {
  label: string;
  color: string;
  dash?: string;
  dot?: boolean;
}

function legend(fr: Frame, entries: LegendEntry[]): string {
  if (entries.length === 0) return "";
  const boxW = Math.max(...entries.map((e) => e.label.length)) * 4.4 + 26;
  const boxH = entries.length * 11 + 5;
  const x0 = fr.ml + fr.pw - boxW - 4;
  const y0 = fr.mt + 3;
  let s = `<rect x="${x0}" y="${y0}" width="${boxW}" height="${boxH}" rx="2" fill="#fff" fill-opacity="0.85" stroke="#ddd" stroke-width="0.4"/>\n`;
  entries.forEach((e, i) => {
    const y = y0 + 8 + i * 11;
    if (e.dot) {
      s += `<circle cx="${x0 + 11}" cy="${y}" r="2.2" fill="${e.color}"/>\n`;
    } else {
      s += `<line x1="${x0 + 5}" y1="${y}" x2="${x0 + 17}" y2="${y}" stroke="${e.color}" stroke-width="1.6" ${e.dash ? `stroke-dasharray="${e.dash}"` : ""}/>\n`;
    }
    s += `<text x="${x0 + 21}" y="${y + 2.6}" font-size="7" fill="#444">${esc(e.label)}</text>\n`;
  });
  return s;
}

export function lineChart(opts: LineChartOpts): string {
  const fr = frame(opts.width ?? 720, opts.height ?? 320);
  const allX = opts.series.flatMap((s) => s.xs);
  const allY = opts.series.flatMap((s) => s.ys);
  if (allX.length === 0) throw new Error("line chart with no points");
  const xMin = Math.min(...allX);
  const xMax = Math.max(...allX);
  const yMin = opts.yMin ?? Math.min(...allY);
  const yMax = opts.yMax ?? Math.max(...allY);
  const xOf = (v: number) =>
    fr.ml + ((v - xMin) / (xMax - xMin || 1)) * fr.pw;
  const yOf = (v: number) =>
    fr.mt + fr.ph - ((v - yMin) / (yMax - yMin || 1)) * fr.ph;
  const xFmt = opts.xFormat ?? ((v: number) => fmtTick(v, xMax - xMin));

  let s = `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${fr.w} ${fr.h}" font-family="Helvetica, Arial, sans-serif">\n`;
  s += `<rect width="${fr.w}" height="${fr.h}" fill="#fff"/>\n`;
  s += header(fr, opts.title, opts.subtitle);
  s += yAxis(fr, yMin, yMax, yOf, opts.yLabel, opts.yFormat);

  for (const t of opts.xTicks ?? niceTicks(xMin, xMax, 6)) {
    const x = xOf(t).toFixed(1);
    s += `<line x1="${x}" y1="${fr.mt + fr.ph}" x2="${x}" y2="${fr.mt + fr.ph + 3}" stroke="#333" stroke-width="0.5"/>\n`;
    s += `<text x="${x}" y="${fr.mt + fr.ph + 12}" text-anchor="middle" font-size="7" fill="#555">${esc(xFmt(t))}</text>\n`;
  }

  for (const sr of opts.series) {
    const pts = sr.xs
      .map((x, i) => `${xOf(x).toFixed(1)},${yOf(sr.ys[i] as number).toFixed(1)}`)
      .join(" ");
    s += `<polyline fill="none" stroke="${sr.color}" stroke-width="1.4" ${sr.dash ? `stroke-dasharray="${sr.dash}"` : ""} points="${pts}"/>\n`;
    if (sr.markers !== false) {
      sr.xs.forEach((x, i) => {
        s += `<circle cx="${xOf(x).toFixed(1)}" cy="${yOf(sr.ys[i] as number).toFixed(1)}" r="2.4" fill="${sr.color}"/>\n`;
      });
    }
  }

  s += axesFrame(fr);
  s += xCaption(fr, opts.xLabel);
  s += legend(fr, opts.series.map((sr) => ({ label: sr.label, color: sr.color, dash: sr.dash })));
  s += `</svg>\n`;
  return s;
}

export function barChart(opts: BarChartOpts): string {
  const fr = frame(opts.width ?? 720, opts.height ?? 320);
  const values = opts.series
    .flatMap((s) => s.values)
    .filter((v): v is number => v !== null)
    .concat(opts.dots ? opts.dots.points.map((p) => p.value) : []);
  if (values.length === 0) throw new Error("bar chart with no values");
  const yMin = opts.yMin ?? Math.min(0, ...values);
  const yMax = opts.yMax ?? Math.max(...values) * 1.06;
  const yOf = (v: number) =>
    fr.mt + fr.ph - ((v - yMin) / (yMax - yMin || 1)) * fr.ph;

  const nCat = opts.categories.length;
  const slot = fr.pw / Math.max(nCat, 1);
  const groupW = slot * 0.72;
  const barW = groupW / Math.max(opts.series.length, 1);
  const catX = (c: number) => fr.ml + slot * c + slot / 2;

  let s = `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${fr.w} ${fr.h}" font-family="Helvetica, Arial, sans-serif">\n`;
  s += `<rect width="${fr.w}" height="${fr.h}" fill="#fff"/>\n`;
  s += header(fr, opts.title, opts.subtitle);
  s += yAxis(fr, yMin, yMax, yOf, opts.yLabel, opts.yFormat);

  opts.categories.forEach((c, i) => {
    const x = catX(i).toFixed(1);
    s += `<line x1="${x}" y1="${fr.mt + fr.ph}" x2="${x}" y2="${fr.mt + fr.ph + 3}" stroke="#333" stroke-width="0.5"/>\n`;
    s += `<text x="${x}" y="${fr.mt + fr.ph + 12}" text-anchor="middle" font-size="7" fill="#555">${esc(c)}</text>\n`;
  });

  const base = yOf(Math.max(yMin, 0));
  opts.series.forEach((sr, si) => {
    sr.values.forEach((v, ci) => {
      if (v === null) return;
      const x = catX(ci) - groupW / 2 + si * barW;
      const y = yOf(v);
      const h = Math.max(base - y, 0);
      s += `<rect x="${x.toFixed(1)}" y="${y.toFixed(1)}" width="${(barW * 0.92).toFixed(1)}" height="${h.toFixed(1)}" fill="${sr.color}"/>\n`;
    });
  });

  if (opts.dots) {
    for (const p of opts.dots.points) {
      s += `<circle cx="${catX(p.cat).toFixed(1)}" cy="${yOf(p.value).toFixed(1)}" r="2" fill="${opts.dots.color}" fill-opacity="0.75"/>\n`;
    }
  }

  s += axesFrame(fr);
  s += xCaption(fr, opts.xLabel);
  const entries: LegendEntry[] = opts.series.map((sr) => ({ label: sr.label, color: sr.color }));
  if (opts.dots) entries.push({ label: opts.dots.label, color: opts.dots.color, dot: true });
  s += legend(fr, entries);
  s += `</svg>\n`;
  return s;
}
