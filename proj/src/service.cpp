#include "benign/service.hpp"

#include <httplib.h>

#include <array>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>

#include "benign/adjudication.hpp"
#include "benign/human_eval.hpp"
#include "benign/jsonl.hpp"

namespace benign::service {

namespace fs = std::filesystem;
using adjudication::ReviewDecision;

namespace {

int status_for(Errc code) {
    switch (code) {
        case Errc::not_found:
        case Errc::unknown_reviewer: return 404;
        case Errc::stale_version: return 409;
        case Errc::parse_error: return 400;
        case Errc::duplicate_reviewer:
        case Errc::invalid_correction:
        case Errc::cross_record_decisions:
        case Errc::out_of_range_score:
        case Errc::missing_score:
        case Errc::invalid_argument:
        case Errc::empty_text: return 422;
        default: return 500;
    }
}

void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
    send_json(res, status_for(e.code()), Json{{"error", to_string(e.code())}, {"message", e.what()}});
}

std::optional<std::uint64_t> parse_version(std::string header) {
    if (header.empty()) return std::nullopt;
    if (header.size() >= 2 && header.front() == '"' && header.back() == '"') header = header.substr(1, header.size() - 2);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(header.data(), header.data() + header.size(), v);
    if (ec != std::errc{} || ptr != header.data() + header.size()) {
        throw Error(Errc::parse_error, "If-Match must be a decision version");
    }
    return v;
}

template <typename T, typename F>
std::vector<T> load_lines(const fs::path& path, F&& decode) {
    std::vector<T> out;
    for (const auto& j : jsonl::read_all(path)) out.push_back(decode(j));
    return out;
}

}  // namespace

struct ReviewService::Impl {
    Impl(ServiceOptions opts, Clock& c, const orchestrator::WarningSink& warn)
        : options(std::move(opts)),
          layout{options.store_dir},
          clock(c),
          decisions_log(layout.decisions(), warn),
          gold_log(layout.gold(), warn),
          sheets(c, layout.sheets()) {
        if (options.token.empty()) throw Error(Errc::config_error, "the service needs a non-empty token");
        for (auto& r : load_lines<SourceRecord>(layout.records(), source_record_from_json)) {
            const std::string id = r.id;
            records.emplace(id, std::move(r));
        }
        for (auto& c2 : load_lines<BenignCandidate>(layout.candidates(), benign_candidate_from_json)) {
            const std::string id = c2.record_id;
            candidates.emplace(id, std::move(c2));
        }
        reviewers = load_lines<adjudication::ReviewerProfile>(layout.reviewers(),
                                                              adjudication::reviewer_profile_from_json);
        for (auto& a : load_lines<adjudication::Assignment>(layout.assignments(), adjudication::assignment_from_json)) {
            if (!records.contains(a.record_id) || !candidates.contains(a.record_id)) {
                throw Error(Errc::config_error, "assignment for unknown record or candidate: " + a.record_id);
            }
            assignment_order.push_back(a.record_id);
            const std::string id = a.record_id;
            assignments.emplace(id, std::move(a));
        }

        std::vector<ReviewDecision> decisions;
        for (const auto& j : *decisions_log.snapshot()) decisions.push_back(adjudication::review_decision_from_json(j));
        book.load(std::move(decisions));
        for (const auto& j : *gold_log.snapshot()) {
            auto g = gold_pair_from_json(j);
            const std::string id = g.record_id;
            gold[id] = std::move(g);
        }
        for (const auto& id : assignment_order) maybe_finalize(id);
    }

    bool known_reviewer(const std::string& id) const {
        return std::any_of(reviewers.begin(), reviewers.end(), [&](const auto& r) { return r.id == id; });
    }

    std::mutex& stripe(const std::string& record_id) {
        return stripes[std::hash<std::string>{}(record_id) % stripes.size()];
    }

    std::string status_of(const std::string& record_id) {
        std::lock_guard lock(gold_mu);
        auto it = gold.find(record_id);
        if (it == gold.end()) return "pending";
        return it->second.finalized() ? "finalized" : "escalated";
    }

    // Caller holds the record's stripe (or is the constructor).
    void maybe_finalize(const std::string& record_id) {
        {
            std::lock_guard lock(gold_mu);
            if (gold.contains(record_id)) return;
        }
        const auto& assignment = assignments.at(record_id);
        auto decisions = book.for_record(record_id);
        if (decisions.size() < assignment.reviewer_ids.size()) return;
        GoldPair g = adjudication::majority_vote(candidates.at(record_id), records.at(record_id).text, decisions,
                                                 reviewers);
        gold_log.append(to_json(g));
        std::lock_guard lock(gold_mu);
        gold[record_id] = std::move(g);
    }

    Json card(const std::string& record_id) {
        const auto& a = assignments.at(record_id);
        return Json{{"record_id", record_id},
                    {"unsafe_text", records.at(record_id).text},
                    {"candidate_text", candidates.at(record_id).candidate_text},
                    {"version", book.version(record_id)},
                    {"decisions", book.version(record_id)},
                    {"required", a.reviewer_ids.size()},
                    {"status", status_of(record_id)}};
    }

    void queue(const httplib::Request& req, httplib::Response& res) {
        const std::string reviewer = req.matches[1];
        if (!known_reviewer(reviewer)) throw Error(Errc::unknown_reviewer, reviewer);
        Json items = Json::array();
        for (const auto& id : assignment_order) {
            const auto& ids = assignments.at(id).reviewer_ids;
            if (std::find(ids.begin(), ids.end(), reviewer) == ids.end()) continue;
            if (book.has_decided(id, reviewer) || status_of(id) != "pending") continue;
            items.push_back(card(id));
        }
        send_json(res, 200, items);
    }

    void record(const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        if (!records.contains(id)) throw Error(Errc::not_found, "unknown record " + id);
        Json body;
        if (assignments.contains(id)) {
            body = card(id);
        } else {
            body = Json{{"record_id", id}, {"unsafe_text", records.at(id).text}};
            auto c = candidates.find(id);
            body["candidate_text"] = c == candidates.end() ? Json(nullptr) : Json(c->second.candidate_text);
            body["version"] = book.version(id);
            body["status"] = "unassigned";
        }
        {
            std::lock_guard lock(gold_mu);
            auto g = gold.find(id);
            if (g != gold.end() && g->second.finalized()) body["gold"] = to_json(g->second);
        }
        res.set_header("ETag", std::to_string(book.version(id)));
        send_json(res, 200, body);
    }

    void post_decision(const httplib::Request& req, httplib::Response& res) {
        ReviewDecision d = adjudication::review_decision_from_json(parse_json(req.body));
        if (!records.contains(d.record_id) || !candidates.contains(d.record_id)) {
            throw Error(Errc::not_found, "unknown record " + d.record_id);
        }
        if (!known_reviewer(d.reviewer_id)) throw Error(Errc::unknown_reviewer, d.reviewer_id);
        auto a = assignments.find(d.record_id);
        if (a == assignments.end() || std::find(a->second.reviewer_ids.begin(), a->second.reviewer_ids.end(),
                                                d.reviewer_id) == a->second.reviewer_ids.end()) {
            throw Error(Errc::invalid_argument, d.reviewer_id + " is not assigned to " + d.record_id);
        }
        adjudication::validate_decision(d, candidates.at(d.record_id));
        const auto expected = parse_version(req.get_header_value("If-Match"));
        if (d.submitted_at.empty()) d.submitted_at = clock.utc_now();

        std::lock_guard lock(stripe(d.record_id));
        if (book.has_decided(d.record_id, d.reviewer_id)) {
            throw Error(Errc::duplicate_reviewer, d.reviewer_id + " already decided " + d.record_id);
        }
        if (status_of(d.record_id) != "pending") throw Error(Errc::stale_version, d.record_id + " is already closed");
        const auto submitted = book.submit(d, expected);
        decisions_log.append(adjudication::to_json(d));
        maybe_finalize(d.record_id);
        res.set_header("ETag", std::to_string(submitted.version));
        send_json(res, 201,
                  Json{{"record_id", d.record_id},
                       {"version", submitted.version},
                       {"decisions", submitted.decisions_for_record},
                       {"status", status_of(d.record_id)}});
    }

    void get_gold(httplib::Response& res) {
        Json items = Json::array();
        std::lock_guard lock(gold_mu);
        for (const auto& [id, g] : gold) {
            if (g.finalized()) items.push_back(to_json(g));
        }
        send_json(res, 200, items);
    }

    void post_likert(const httplib::Request& req, httplib::Response& res) {
        const LikertSheet sheet = likert_sheet_from_json(parse_json(req.body));
        const auto outcome = sheets.submit(sheet);
        send_json(res, outcome == human_eval::SubmitOutcome::accepted ? 201 : 200,
                  Json{{"outcome", human_eval::to_string(outcome)}, {"sheet", to_json(sheet)}});
    }

    void latest_report(httplib::Response& res) {
        if (!fs::exists(layout.latest_report())) throw Error(Errc::not_found, "no report has been published");
        send_json(res, 200, parse_json(jsonl::read_text(layout.latest_report())));
    }

    ServiceOptions options;
    StoreLayout layout;
    Clock& clock;
    std::map<std::string, SourceRecord> records;
    std::map<std::string, BenignCandidate> candidates;
    std::vector<adjudication::ReviewerProfile> reviewers;
    std::map<std::string, adjudication::Assignment> assignments;
    std::vector<std::string> assignment_order;
    adjudication::DecisionBook book;
    orchestrator::JsonlLog decisions_log;
    orchestrator::JsonlLog gold_log;
    std::mutex gold_mu;
    std::map<std::string, GoldPair> gold;
    human_eval::SheetStore sheets;
    std::array<std::mutex, 64> stripes;
    httplib::Server server;
};

ReviewService::ReviewService(ServiceOptions options, Clock& clock, const orchestrator::WarningSink& warn)
    : impl_(std::make_unique<Impl>(std::move(options), clock, warn)) {
    auto& s = impl_->server;
    Impl* impl = impl_.get();

    s.set_pre_routing_handler([impl](const httplib::Request& req, httplib::Response& res) {
        if (req.get_header_value(kTokenHeader) != impl->options.token) {
            send_json(res, 401, Json{{"error", "unauthorized"}, {"message", "missing or wrong token"}});
            return httplib::Server::HandlerResponse::Handled;
        }
        return httplib::Server::HandlerResponse::Unhandled;
    });

    auto guarded = [](std::function<void(const httplib::Request&, httplib::Response&)> fn) {
        return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const Error& e) {
                send_error(res, e);
            } catch (const std::exception& e) {
                send_json(res, 500, Json{{"error", "internal"}, {"message", e.what()}});
            }
        };
    };

    s.Get(R"(/queue/([^/]+))", guarded([impl](const auto& q, auto& r) { impl->queue(q, r); }));
    s.Get(R"(/records/([^/]+))", guarded([impl](const auto& q, auto& r) { impl->record(q, r); }));
    s.Post("/decisions", guarded([impl](const auto& q, auto& r) { impl->post_decision(q, r); }));
    s.Get("/gold", guarded([impl](const auto&, auto& r) { impl->get_gold(r); }));
    s.Post("/likert", guarded([impl](const auto& q, auto& r) { impl->post_likert(q, r); }));
    s.Get("/reports/latest", guarded([impl](const auto&, auto& r) { impl->latest_report(r); }));
}

ReviewService::~ReviewService() { stop(); }

int ReviewService::bind(const std::string& host, int port) {
    auto& s = impl_->server;
    if (port == 0) {
        const int bound = s.bind_to_any_port(host);
        if (bound <= 0) throw Error(Errc::io_error, "cannot bind " + host);
        return bound;
    }
    if (!s.bind_to_port(host, port)) throw Error(Errc::io_error, "cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void ReviewService::serve() { impl_->server.listen_after_bind(); }

void ReviewService::stop() {
    if (impl_) impl_->server.stop();
}

std::size_t ReviewService::decision_count() const { return impl_->decisions_log.size(); }

std::size_t ReviewService::gold_count() const {
    std::lock_guard lock(impl_->gold_mu);
    return impl_->gold.size();
}

}  // namespace benign::service
