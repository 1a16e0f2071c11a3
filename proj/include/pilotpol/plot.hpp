// SPDX-License-Identifier: Apache-2.0
//
// pilotpol - pilot-tone polarization tracking for CV-QKD receivers
// Copyright (C) 2026 The pilotpol authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#pragma once

#include "pilotpol/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace pilotpol::plot
{
    namespace detail
    {
        inline std::vector<std::string> split(const std::string &line)
        {
            std::vector<std::string> out;
            std::string cur;
            std::istringstream is(line);
            while (std::getline(is, cur, ','))
                out.push_back(cur);
            if (!line.empty() && line.back() == ',')
                out.emplace_back();
            return out;
        }

        inline double to_double(const std::string &s, std::size_t line, const char *col)
        {
            if (s == "nan")
                return std::nan("");
            try
            {
                std::size_t pos = 0;
                const double v = std::stod(s, &pos);
                if (pos != s.size())
                    throw std::invalid_argument(s);
                return v;
            }
            catch (const std::exception &)
            {
                throw ParseError("line " + std::to_string(line) + ": bad value '" + s + "' in column " + col);
            }
        }

        inline std::uint64_t to_u64(const std::string &s, std::size_t line, const char *col)
        {
            if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
                throw ParseError("line " + std::to_string(line) + ": bad integer '" + s + "' in column " + col);
            try
            {
                return std::stoull(s);
            }
            catch (const std::exception &)
            {
                throw ParseError("line " + std::to_string(line) + ": integer out of range in column " + col);
            }
        }
    }

    inline std::vector<MetricsReport> parse_csv(std::istream &in)
    {
        std::string line;
        std::size_t ln = 0;
        if (!std::getline(in, line))
            throw ParseError("line 1: missing header");
        ++ln;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line != csv_header())
            throw ParseError("line 1: unexpected header");
        std::vector<MetricsReport> rows;
        while (std::getline(in, line))
        {
            ++ln;
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            if (line.empty())
                continue;
            const auto f = detail::split(line);
            if (f.size() != 10)
                throw ParseError("line " + std::to_string(ln) + ": expected 10 fields, got " + std::to_string(f.size()));
            MetricsReport r;
            r.sr = detail::to_double(f[0], ln, "sr_rad_s");
            r.trial = (std::size_t)detail::to_u64(f[1], ln, "trial");
            r.seed = detail::to_u64(f[2], ln, "seed");
            r.tracker = f[3];
            if (r.tracker.empty())
                throw ParseError("line " + std::to_string(ln) + ": empty tracker");
            r.t_hat = detail::to_double(f[4], ln, "t_hat");
            r.xi_hat = detail::to_double(f[5], ln, "xi_hat_snu");
            r.evm_db = detail::to_double(f[6], ln, "evm_db");
            r.alpha_rms_err = detail::to_double(f[7], ln, "alpha_rms_err_rad");
            r.skr_bps = detail::to_double(f[8], ln, "skr_bps");
            if (f[9] != "0" && f[9] != "1")
                throw ParseError("line " + std::to_string(ln) + ": diverged must be 0 or 1");
            r.diverged = f[9] == "1";
            rows.push_back(std::move(r));
        }
        return rows;
    }

    inline std::vector<MetricsReport> read_csv(const std::string &path)
    {
        std::ifstream f(path);
        if (!f)
            throw ParseError("cannot open " + path);
        return parse_csv(f);
    }

    // Data-to-pixel affine map of one chart's plotting area
    struct Axes
    {
        double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0; // data range
        double left = 70.0, top = 30.0, width = 520.0, height = 330.0;

        double px(double x) const { return left + (x - x0) / (x1 - x0) * width; }
        double py(double y) const { return top + height - (y - y0) / (y1 - y0) * height; }

        // Range covering the data with 5% margins; a degenerate range is widened
        static Axes fit(const std::vector<double> &xs, const std::vector<double> &ys)
        {
            Axes a;
            auto range = [](const std::vector<double> &v, double &lo, double &hi)
            {
                lo = 0.0;
                hi = 1.0;
                bool any = false;
                for (double x : v)
                {
                    if (!std::isfinite(x))
                        continue;
                    if (!any)
                        lo = hi = x;
                    lo = std::min(lo, x);
                    hi = std::max(hi, x);
                    any = true;
                }
                if (hi - lo <= 1e-12 * std::max(1.0, std::abs(hi)))
                {
                    const double d = std::max(std::abs(hi) * 0.1, 1e-3);
                    lo -= d;
                    hi += d;
                }
                const double m = 0.05 * (hi - lo);
                lo -= m;
                hi += m;
            };
            range(xs, a.x0, a.x1);
            range(ys, a.y0, a.y1);
            return a;
        }
    };

    struct Series
    {
        std::string name;
        std::vector<double> scatter_x, scatter_y;
        std::vector<double> mean_x, mean_y; // polyline through per-SR means
    };

    // One series per tracker; non-finite values are skipped
    inline std::vector<Series> make_series(const std::vector<MetricsReport> &rows,
                                           double (*value)(const MetricsReport &))
    {
        std::map<std::string, std::map<double, std::pair<double, std::size_t>>> acc;
        std::map<std::string, Series> out;
        for (const auto &r : rows)
        {
            const double v = value(r);
            auto &s = out[r.tracker];
            s.name = r.tracker;
            if (!std::isfinite(v))
                continue;
            s.scatter_x.push_back(r.sr);
            s.scatter_y.push_back(v);
            auto &a = acc[r.tracker][r.sr];
            a.first += v;
            a.second += 1;
        }
        std::vector<Series> res;
        for (auto &[name, s] : out)
        {
            for (const auto &[sr, a] : acc[name])
            {
                s.mean_x.push_back(sr);
                s.mean_y.push_back(a.first / (double)a.second);
            }
            res.push_back(std::move(s));
        }
        return res;
    }

    inline std::string fmt(double x)
    {
        char b[32];
        std::snprintf(b, sizeof b, "%.2f", x);
        return b;
    }

    inline std::string render_svg(const std::vector<Series> &series, const std::string &title, const std::string &xlabel,
                                  const std::string &ylabel, Axes *axes_out = nullptr)
    {
        std::vector<double> xs, ys;
        for (const auto &s : series)
        {
            xs.insert(xs.end(), s.scatter_x.begin(), s.scatter_x.end());
            ys.insert(ys.end(), s.scatter_y.begin(), s.scatter_y.end());
        }
        const Axes ax = Axes::fit(xs, ys);
        if (axes_out)
            *axes_out = ax;
        static const char *colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
        std::ostringstream o;
        o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" font-family=\"sans-serif\" font-size=\"12\">\n";
        o << "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
        o << "<text x=\"320\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
        o << "<rect x=\"" << fmt(ax.left) << "\" y=\"" << fmt(ax.top) << "\" width=\"" << fmt(ax.width) << "\" height=\""
          << fmt(ax.height) << "\" fill=\"none\" stroke=\"black\"/>\n";
        for (int i = 0; i <= 4; ++i)
        {
            const double xv = ax.x0 + (ax.x1 - ax.x0) * i / 4.0, yv = ax.y0 + (ax.y1 - ax.y0) * i / 4.0;
            char bx[32], by[32];
            std::snprintf(bx, sizeof bx, "%.4g", xv);
            std::snprintf(by, sizeof by, "%.4g", yv);
            o << "<text x=\"" << fmt(ax.px(xv)) << "\" y=\"" << fmt(ax.top + ax.height + 16)
              << "\" text-anchor=\"middle\">" << bx << "</text>\n";
            o << "<text x=\"" << fmt(ax.left - 6) << "\" y=\"" << fmt(ax.py(yv) + 4) << "\" text-anchor=\"end\">" << by
              << "</text>\n";
        }
        o << "<text x=\"" << fmt(ax.left + ax.width / 2) << "\" y=\"410\" text-anchor=\"middle\">" << xlabel << "</text>\n";
        o << "<text x=\"14\" y=\"" << fmt(ax.top + ax.height / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
          << fmt(ax.top + ax.height / 2) << ")\">" << ylabel << "</text>\n";
        for (std::size_t k = 0; k < series.size(); ++k)
        {
            const auto &s = series[k];
            const char *c = colors[k % 5];
            for (std::size_t i = 0; i < s.scatter_x.size(); ++i)
                o << "<circle cx=\"" << fmt(ax.px(s.scatter_x[i])) << "\" cy=\"" << fmt(ax.py(s.scatter_y[i]))
                  << "\" r=\"2.5\" fill=\"" << c << "\" fill-opacity=\"0.5\"/>\n";
            if (!s.mean_x.empty())
            {
                o << "<polyline class=\"mean\" data-series=\"" << s.name << "\" fill=\"none\" stroke=\"" << c
                  << "\" stroke-width=\"1.5\" points=\"";
                for (std::size_t i = 0; i < s.mean_x.size(); ++i)
                    o << (i ? " " : "") << fmt(ax.px(s.mean_x[i])) << ',' << fmt(ax.py(s.mean_y[i]));
                o << "\"/>\n";
            }
            o << "<text x=\"" << fmt(ax.left + ax.width - 8) << "\" y=\"" << fmt(ax.top + 16 + 14 * (double)k)
              << "\" text-anchor=\"end\" fill=\"" << c << "\">" << s.name << "</text>\n";
        }
        o << "</svg>\n";
        return o.str();
    }

    // xi_hat, skr and alpha error vs SR; returns the written paths
    inline std::vector<std::string> emit_plots(const std::string &csv_path, const std::string &out_prefix)
    {
        const auto rows = read_csv(csv_path);
        struct Chart
        {
            const char *suffix, *title, *ylabel;
            double (*value)(const MetricsReport &);
        };
        const Chart charts[] = {
            {"_xi.svg", "Excess noise vs scrambling rate", "xi_hat (SNU)", [](const MetricsReport &r) { return r.xi_hat; }},
            {"_skr.svg", "Asymptotic key rate vs scrambling rate", "SKR (Mbit/s)",
             [](const MetricsReport &r) { return r.skr_bps * 1e-6; }},
            {"_alpha.svg", "Tracker alpha error vs scrambling rate", "alpha RMS error (rad)",
             [](const MetricsReport &r) { return r.alpha_rms_err; }},
        };
        std::vector<std::string> paths;
        for (const auto &c : charts)
        {
            const std::string path = out_prefix + c.suffix;
            std::ofstream f(path);
            if (!f)
                throw RuntimeFailure("cannot write " + path);
            f << render_svg(make_series(rows, c.value), c.title, "SR (rad/s)", c.ylabel);
            paths.push_back(path);
        }
        return paths;
    }
}
