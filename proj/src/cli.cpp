// SPDX-License-Identifier: Apache-2.0

#include "r2ai/cli.hpp"

#include "r2ai/service.hpp"
#include "r2ai/session.hpp"
#include "r2ai/text.hpp"

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <pthread.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

namespace r2ai {

namespace {

std::string join(const std::vector<std::string>& words, std::size_t from) {
    std::string out;
    for (std::size_t i = from; i < words.size(); ++i) {
        if (!out.empty()) {
            out += ' ';
        }
        out += words[i];
    }
    return out;
}

[[noreturn]] void usage(const std::string& msg) { throw Error(ErrorCode::parse_failure, msg); }

Command parse_words(const std::vector<std::string>& words) {
    Command c;
    const auto& flag = words.front();
    const auto rest = join(words, 1);
    const auto no_argument = [&](CommandKind kind) {
        if (words.size() > 1) {
            usage(flag + " takes no argument");
        }
        c.kind = kind;
    };
    if (flag.empty() || flag.front() != '-') {
        c.kind = CommandKind::free_query;
        c.text = join(words, 0);
    } else if (flag == "--") {
        if (rest.empty()) {
            usage("missing query after --");
        }
        c.kind = CommandKind::free_query;
        c.text = rest;
    } else if (flag == "-d") {
        no_argument(CommandKind::decompile);
    } else if (flag == "-dr") {
        no_argument(CommandKind::decompile_recursive);
    } else if (flag == "-a") {
        if (rest.empty()) {
            usage("-a needs a query");
        }
        c.kind = CommandKind::auto_query;
        c.text = rest;
    } else if (flag == "-e") {
        c.kind = CommandKind::settings;
        c.text = rest;
    } else if (flag == "-h") {
        c.kind = CommandKind::help;
    } else if (flag == "-i") {
        if (words.size() < 3) {
            usage("-i needs a file and a query");
        }
        c.kind = CommandKind::file_query;
        c.path = words[1];
        c.text = join(words, 2);
    } else if (flag == "-m") {
        c.kind = CommandKind::model;
        c.text = rest;
    } else if (flag == "-n") {
        no_argument(CommandKind::suggest_name);
    } else if (flag == "-r") {
        no_argument(CommandKind::repl);
    } else if (flag == "-L") {
        no_argument(CommandKind::log);
    } else if (flag == "-Lj") {
        no_argument(CommandKind::log_json);
    } else if (flag.rfind("-L-", 0) == 0) {
        c.kind = CommandKind::drop_last;
        const auto digits = flag.substr(3);
        if (!digits.empty()) {
            if (digits.find_first_not_of("0123456789") != std::string::npos || digits.size() > 9) {
                usage("-L-[N] needs a number, got '" + digits + "'");
            }
            c.count = std::stoul(digits);
        }
        if (words.size() > 1) {
            usage(flag + " takes no argument");
        }
    } else if (flag == "-R") {
        no_argument(CommandKind::reset);
    } else if (flag == "-Rq") {
        c.kind = CommandKind::embeddings;
        c.text = rest;
    } else if (flag == "-s") {
        no_argument(CommandKind::signature);
    } else if (flag == "-x") {
        no_argument(CommandKind::explain);
    } else if (flag == "-v") {
        no_argument(CommandKind::suggest_vars);
    } else if (flag == "-V") {
        no_argument(CommandKind::find_vulns);
    } else if (flag == "-Vr") {
        no_argument(CommandKind::find_vulns_recursive);
    } else {
        throw Error(ErrorCode::unknown_flag, "unknown flag '" + flag + "'");
    }
    return c;
}

std::optional<DirectKind> direct_kind_of(CommandKind k) {
    switch (k) {
    case CommandKind::decompile: return DirectKind::decompile;
    case CommandKind::decompile_recursive: return DirectKind::decompile_recursive;
    case CommandKind::suggest_name: return DirectKind::suggest_name;
    case CommandKind::signature: return DirectKind::signature;
    case CommandKind::explain: return DirectKind::explain;
    case CommandKind::suggest_vars: return DirectKind::suggest_vars;
    case CommandKind::find_vulns: return DirectKind::find_vulns;
    case CommandKind::find_vulns_recursive: return DirectKind::find_vulns_recursive;
    case CommandKind::free_query: return DirectKind::free_query;
    default: return std::nullopt;
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::pair<std::string, int> parse_bind(const std::string& spec) {
    std::string host = "127.0.0.1";
    std::string port = spec;
    if (const auto colon = spec.rfind(':'); colon != std::string::npos) {
        host = spec.substr(0, colon);
        port = spec.substr(colon + 1);
    }
    if (port.empty() || port.find_first_not_of("0123456789") != std::string::npos || port.size() > 5) {
        usage("--serve expects [HOST:]PORT, got '" + spec + "'");
    }
    return {host, std::stoi(port)};
}

class Shell {
public:
    Shell(CliIO& io, GlobalOptions options) : io_(io), options_(std::move(options)) {}

    void open() {
        registry_ = std::make_shared<SettingsRegistry>();
        std::string config = options_.config;
        if (config.empty()) {
            config = io_.env("R2AI_CONFIG").value_or("");
        }
        if (!config.empty()) {
            registry_->load_file(config);
        }
        for (const auto& kv : options_.set) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                usage("--set expects KEY=VALUE, got '" + kv + "'");
            }
            registry_->set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        const auto settings = registry_->snapshot();

        SessionOptions so;
        so.settings = registry_;
        so.transport = io_.transport;
        so.env = io_.env;
        so.dispatcher = io_.dispatcher;
        DisasmOptions dopts{settings.r2_bin, std::chrono::seconds(settings.r2_timeout),
                            static_cast<std::size_t>(settings.r2_output_cap)};
        if (!options_.mock_fixture.empty()) {
            so.disasm = std::make_unique<DisasmSession>(
                DisasmSession::open_mock(MockFixture::load(options_.mock_fixture), nullptr, dopts));
        } else if (!options_.binary.empty()) {
            so.disasm = std::make_unique<DisasmSession>(DisasmSession::open(options_.binary, dopts));
        }
        if (so.disasm && !options_.seek.empty()) {
            so.disasm->exec("s " + options_.seek);
        }
        const std::filesystem::path pricing =
            settings.pricing_path.empty() ? bundled_pricing_path() : std::filesystem::path(settings.pricing_path);
        if (std::error_code ec; std::filesystem::exists(pricing, ec)) {
            so.prices = PriceTable::load(pricing);
        } else {
            spdlog::warn("no pricing table at {}; costs will show as zero", pricing.string());
        }
        so.templates = TemplateStore::from_settings(settings);
        if (!options_.serve) {
            auto editor = io_.editor;
            if (!editor) {
                editor = [env = io_.env](const std::string& p) { return edit_in_editor(p, env); };
            }
            so.approver = TerminalApprover(io_.in, io_.out, std::move(editor));
            so.on_event = [this](const SessionEvent& e) { on_event(e); };
        }
        session_ = std::make_unique<Session>(std::move(so));
        if (!options_.history.empty() && std::filesystem::exists(options_.history)) {
            session_->load_conversation(Conversation::parse_log(read_file(options_.history)));
        }
    }

    void save_history() {
        if (session_ && !options_.history.empty()) {
            std::ofstream(options_.history) << session_->render_log(LogFormat::structured);
        }
    }

    Session& session() { return *session_; }

    int execute(const Command& c, bool in_repl) {
        switch (c.kind) {
        case CommandKind::help: io_.out << help_text(); return 0;
        case CommandKind::settings: return settings_command(c.text);
        case CommandKind::model: return model_command(c.text);
        case CommandKind::repl:
            if (in_repl) {
                return 0;
            }
            return repl();
        case CommandKind::log: io_.out << session_->render_log(LogFormat::plain); return 0;
        case CommandKind::log_json: io_.out << session_->render_log(LogFormat::structured) << "\n"; return 0;
        case CommandKind::drop_last: session_->drop_last(c.count); return 0;
        case CommandKind::reset: session_->reset_conversation(); return 0;
        case CommandKind::embeddings: io_.err << "out of scope: embeddings\n"; return 1;
        case CommandKind::auto_query: {
            QueryRequest q;
            q.mode = QueryMode::automatic;
            q.text = c.text;
            return query(q);
        }
        case CommandKind::file_query: {
            QueryRequest q;
            q.mode = QueryMode::file;
            q.kind = DirectKind::file_query;
            q.path = c.path;
            q.text = c.text;
            return query(q);
        }
        default: break;
        }
        QueryRequest q;
        q.mode = QueryMode::direct;
        q.kind = direct_kind_of(c.kind).value_or(DirectKind::free_query);
        q.text = c.text;
        return query(q);
    }

    int repl() {
        int last = 0;
        std::string line;
        for (;;) {
            io_.out << "[r2ai]> " << std::flush;
            if (!std::getline(io_.in, line)) {
                io_.out << "\n";
                break;
            }
            const auto t = std::string(text::trim(line));
            if (t.empty()) {
                continue;
            }
            if (t == "q" || t == "quit" || t == "exit") {
                break;
            }
            try {
                last = execute(parse_command_line(t), true);
            } catch (const Error& e) {
                io_.err << "error: " << e.what() << "\n";
                last = 1;
            }
        }
        spdlog::default_logger()->flush();
        return last;
    }

private:
    void on_event(const SessionEvent& e) {
        if (!auto_running_) {
            return;
        }
        if (e.kind == EventKind::status_updated && e.payload.contains("status_line")) {
            io_.out << e.payload["status_line"].get<std::string>() << std::endl;
        } else if (e.kind == EventKind::tool_executed) {
            io_.out << e.payload["output"].get<std::string>();
            const auto& s = e.payload["output"].get_ref<const std::string&>();
            if (!s.empty() && s.back() != '\n') {
                io_.out << "\n";
            }
            io_.out << std::flush;
        }
    }

    int query(const QueryRequest& q) {
        auto_running_ = q.mode == QueryMode::automatic;
        const auto outcome = session_->submit(q).get();
        auto_running_ = false;
        if (outcome.ok) {
            io_.out << outcome.answer;
            if (outcome.answer.empty() || outcome.answer.back() != '\n') {
                io_.out << "\n";
            }
            return 0;
        }
        if (outcome.exit_code == 3) {
            io_.err << "aborted: " << outcome.error << "\n";
        } else {
            io_.err << "error: " << outcome.error << "\n";
        }
        if (!outcome.remediation.empty()) {
            io_.err << "hint: " << outcome.remediation << "\n";
        }
        return outcome.exit_code;
    }

    int settings_command(const std::string& arg) {
        auto& reg = session_->settings();
        if (arg.empty()) {
            for (const auto& key : SettingsRegistry::keys()) {
                io_.out << "r2ai." << key << " = " << reg.get(key) << "\n";
            }
            return 0;
        }
        if (const auto eq = arg.find('='); eq != std::string::npos) {
            reg.set(text::trim(arg.substr(0, eq)), text::trim(arg.substr(eq + 1)));
            return 0;
        }
        std::string key(text::trim(arg));
        if (key.rfind("r2ai.", 0) == 0) {
            key = key.substr(5);
        }
        io_.out << "r2ai." << key << " = " << reg.get(key) << "\n";
        return 0;
    }

    int model_command(const std::string& arg) {
        auto& reg = session_->settings();
        if (!arg.empty()) {
            io_.out << reg.select_model(text::trim(arg)).display() << "\n";
            return 0;
        }
        io_.out << "model: " << reg.model().display() << "\nsuggested:\n";
        for (const auto& m : suggested_models()) {
            io_.out << "  " << to_string(m.provider) << ":" << m.name << "\n";
        }
        return 0;
    }

    CliIO& io_;
    GlobalOptions options_;
    std::shared_ptr<SettingsRegistry> registry_;
    std::unique_ptr<Session> session_;
    std::atomic<bool> auto_running_{false};
};

int serve(Shell& shell, const std::string& spec, CliIO& io) {
    const auto [host, port] = parse_bind(spec);
    Service service(shell.session(), ServiceOptions{host, port});
    service.start();
    io.out << "serving on http://" << host << ":" << service.port() << "/api/v1\n" << std::flush;
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    int sig = 0;
    sigwait(&set, &sig);
    service.stop();
    return 0;
}

} // namespace

Invocation parse_invocation(const std::vector<std::string>& args) {
    Invocation inv;
    std::size_t i = 0;
    const auto value = [&](const std::string& name) -> std::string {
        if (i + 1 >= args.size()) {
            usage(name + " needs a value");
        }
        return args[++i];
    };
    for (; i < args.size(); ++i) {
        const auto& a = args[i];
        if (a.rfind("--", 0) != 0 || a == "--") {
            break;
        }
        std::string name = a;
        std::optional<std::string> inline_value;
        if (const auto eq = a.find('='); eq != std::string::npos) {
            name = a.substr(0, eq);
            inline_value = a.substr(eq + 1);
        }
        const auto take = [&] { return inline_value ? *inline_value : value(name); };
        if (name == "--bin") {
            inv.options.binary = take();
        } else if (name == "--mock") {
            inv.options.mock_fixture = take();
        } else if (name == "--config") {
            inv.options.config = take();
        } else if (name == "--history") {
            inv.options.history = take();
        } else if (name == "--seek") {
            inv.options.seek = take();
        } else if (name == "--set") {
            inv.options.set.push_back(take());
        } else if (name == "--verbose") {
            inv.options.verbose = true;
        } else if (name == "--serve") {
            if (inline_value) {
                inv.options.serve = *inline_value;
            } else if (i + 1 < args.size() && !args[i + 1].empty() && args[i + 1].front() != '-') {
                inv.options.serve = args[++i];
            } else {
                inv.options.serve = "127.0.0.1:8421";
            }
        } else {
            throw Error(ErrorCode::unknown_flag, "unknown option '" + name + "'");
        }
    }
    if (i < args.size()) {
        inv.command = parse_words(std::vector<std::string>(args.begin() + static_cast<std::ptrdiff_t>(i), args.end()));
    } else if (inv.options.serve) {
        inv.command.kind = CommandKind::repl;
    } else {
        usage("no command given");
    }
    return inv;
}

Command parse_command_line(const std::string& line) {
    std::string body(text::trim(line));
    if (body == "r2ai" || body.rfind("r2ai ", 0) == 0) {
        body = std::string(text::trim(std::string_view(body).substr(4)));
    }
    if (body.empty()) {
        usage("empty command");
    }
    if (body.front() != '-') {
        Command c;
        c.kind = CommandKind::free_query;
        c.text = body;
        return c;
    }
    return parse_words(text::split_words(body));
}

std::string help_text() {
    return "Usage: r2ai   [-args] [...]\n"
           "| r2ai -d                 Decompile current function\n"
           "| r2ai -dr                Decompile current function (+ 1 level of recursivity)\n"
           "| r2ai -a [query]         Resolve question using auto mode\n"
           "| r2ai -e                 Same as '-e r2ai.'\n"
           "| r2ai -h                 Show this help message\n"
           "| r2ai -i [file] [query]  read file and ask the llm with the given query\n"
           "| r2ai -m                 show selected model, list suggested ones, choose one\n"
           "| r2ai -n                 suggest a better name for the current function\n"
           "| r2ai -r                 enter the chat repl\n"
           "| r2ai -L                 show chat logs (See -Lj for json)\n"
           "| r2ai -L-[N]             delete the last (or N last messages from the chat history)\n"
           "| r2ai -R                 reset the chat conversation context\n"
           "| r2ai -Rq ([text])       refresh and query embeddings (out of scope: embeddings)\n"
           "| r2ai -s                 function signature\n"
           "| r2ai -x                 explain current function\n"
           "| r2ai -v                 suggest better variables names and types\n"
           "| r2ai -V[r]              find vulnerabilities in the decompiled code (-Vr uses -dr)\n"
           "| r2ai [arg]              send a post request to talk to r2ai and print the output\n"
           "Options (before the command):\n"
           "  --bin PATH              open PATH in radare2\n"
           "  --mock FIXTURE          answer disassembler commands from a JSON fixture\n"
           "  --seek ADDR             seek to ADDR before running the command\n"
           "  --config PATH           key=value settings file (default $R2AI_CONFIG)\n"
           "  --set KEY=VALUE         override one setting; may repeat\n"
           "  --history PATH          load the conversation from PATH and save it back\n"
           "  --serve [HOST:]PORT     serve the session API (default 127.0.0.1:8421)\n"
           "  --verbose               debug logging on stderr\n";
}

TerminalApprover::TerminalApprover(std::istream& in, std::ostream& out, Editor editor)
    : in_(in), out_(out), editor_(std::move(editor)) {}

ApprovalDecision TerminalApprover::operator()(const ApprovalRequest& request) {
    out_ << "\n[approval] " << request.call.name;
    if (!request.danger.empty()) {
        out_ << " DANGER(";
        for (std::size_t i = 0; i < request.danger.size(); ++i) {
            out_ << (i ? "," : "") << request.danger[i];
        }
        out_ << ")";
    }
    out_ << "\n" << request.payload;
    if (request.payload.empty() || request.payload.back() != '\n') {
        out_ << "\n";
    }
    std::string line;
    for (;;) {
        out_ << "(a)pprove / (e)dit / (d)eny > " << std::flush;
        if (!std::getline(in_, line)) {
            out_ << "\n";
            return ApprovalDecision::deny("no decision: end of input");
        }
        const auto answer = text::to_lower(text::trim(line));
        if (answer == "a" || answer == "y" || answer == "approve") {
            return ApprovalDecision::approve();
        }
        if (answer == "e" || answer == "edit") {
            const auto edited = editor_ ? editor_(request.payload) : std::nullopt;
            if (!edited) {
                out_ << "editor failed; payload unchanged\n";
                continue;
            }
            out_ << "edited payload:\n" << *edited << "\n";
            return ApprovalDecision::edited(*edited);
        }
        if (answer == "d" || answer == "n" || answer == "deny") {
            out_ << "reason (optional) > " << std::flush;
            std::string reason;
            std::getline(in_, reason);
            return ApprovalDecision::deny(std::string(text::trim(reason)));
        }
        out_ << "answer a, e or d\n";
    }
}

std::optional<std::string> edit_in_editor(const std::string& payload, const EnvLookup& env) {
    std::string editor = env("VISUAL").value_or("");
    if (editor.empty()) {
        editor = env("EDITOR").value_or("vi");
    }
    std::string path = (std::filesystem::temp_directory_path() / "r2ai-edit-XXXXXX").string();
    const int fd = ::mkstemp(path.data());
    if (fd < 0) {
        return std::nullopt;
    }
    ::close(fd);
    std::ofstream(path, std::ios::binary) << payload;
    const int rc = std::system((editor + " '" + path + "'").c_str());
    auto edited = read_file(path);
    std::filesystem::remove(path);
    if (rc != 0) {
        return std::nullopt;
    }
    if (!edited.empty() && edited.back() == '\n' && (payload.empty() || payload.back() != '\n')) {
        edited.pop_back();
    }
    return edited;
}

int run_cli(const std::vector<std::string>& args, CliIO& io) {
    Invocation inv;
    try {
        inv = parse_invocation(args);
    } catch (const Error& e) {
        io.err << "error: " << e.what() << "\n" << help_text();
        return 1;
    }
    if (inv.options.verbose) {
        spdlog::set_level(spdlog::level::debug);
    }
    if (inv.command.kind == CommandKind::help && !inv.options.serve) {
        io.out << help_text();
        return 0;
    }
    if (inv.options.serve) {
        // Worker and server threads inherit the mask, so only sigwait sees these.
        sigset_t set;
        sigemptyset(&set);
        sigaddset(&set, SIGINT);
        sigaddset(&set, SIGTERM);
        pthread_sigmask(SIG_BLOCK, &set, nullptr);
    }
    Shell shell(io, inv.options);
    int rc = 0;
    try {
        shell.open();
        rc = inv.options.serve ? serve(shell, *inv.options.serve, io) : shell.execute(inv.command, false);
    } catch (const Error& e) {
        io.err << "error: " << e.what() << "\n";
        rc = 1;
    }
    shell.save_history();
    return rc;
}

} // namespace r2ai
